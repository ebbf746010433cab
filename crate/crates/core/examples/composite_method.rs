// The accelerated method on a user-defined smooth objective.

use std::error::Error;

use hsue::solver::{AcceleratedMethod, ConjugateSum, SmoothObjective, SolveError};
use hsue::LinkCost;

/// `½ Σ q_i (x_i − c_i)²`.
struct Quadratic {
    q: Vec<f64>,
    c: Vec<f64>,
}

impl SmoothObjective for Quadratic {
    type Info = ();

    fn value(&self, x: &[f64]) -> Result<f64, SolveError> {
        Ok(x.iter()
            .zip(&self.q)
            .zip(&self.c)
            .map(|((x, q), c)| 0.5 * q * (x - c) * (x - c))
            .sum())
    }

    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>, ()), SolveError> {
        let g = x
            .iter()
            .zip(&self.q)
            .zip(&self.c)
            .map(|((x, q), c)| q * (x - c))
            .collect();
        Ok((self.value(x)?, g, ()))
    }
}

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let f = Quadratic {
        q: vec![4.0, 1.0, 0.25],
        c: vec![3.0, 0.5, 6.0],
    };
    let costs = [
        LinkCost::affine(1.0, 1.0)?,
        LinkCost::affine(1.0, 2.0)?,
        LinkCost::affine(2.0, 0.5)?,
    ];
    let psi = ConjugateSum(&costs);

    // separable, so each coordinate has a closed-form minimizer
    let star: Vec<f64> = costs
        .iter()
        .zip(f.q.iter().zip(&f.c))
        .map(|(cost, (&q, &c))| match *cost {
            LinkCost::Affine { a, b } if c > a => (q * c * b + a) / (q * b + 1.0),
            _ => c,
        })
        .collect();
    let phi = |x: &[f64]| -> Result<f64, SolveError> {
        use hsue::solver::CompositeTerm;
        Ok(f.value(x)? + psi.value(x))
    };
    let phi_star = phi(&star)?;

    let mut method = AcceleratedMethod::new(&f, &psi, vec![1.0, 1.0, 2.0], 1.0, 60);
    for _ in 0..200 {
        let step = method.step()?;
        if [1, 10, 50, 200].contains(&step.iter) {
            let gap = phi(&method.state().y)? - phi_star;
            println!(
                "T {:>3}  L {:>3}  A {:>10.3}  phi - phi* {gap:.3e}",
                step.iter, step.l_used, step.a
            );
        }
    }
    let y = &method.state().y;
    println!("minimizer {star:?}\nestimate  {y:?}");
    assert!(y.iter().zip(&star).all(|(a, b)| (a - b).abs() < 1e-6));
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
