// Cost integrals, conjugates and the conjugate prox for the three cost families.

use std::error::Error;

use hsue::LinkCost;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let costs = [
        ("constant", LinkCost::constant(2.0)?),
        ("affine", LinkCost::affine(1.0, 0.5)?),
        ("bpr", LinkCost::power(1.0, 0.15, 2.0, 4.0)?),
    ];
    println!(
        "{:<9} {:>10} {:>10} {:>10} {:>10}",
        "cost", "tau(2)", "sigma(2)", "sigma*(t)", "prox"
    );
    for (name, c) in &costs {
        let tau = c.travel_time(2.0)?;
        let sigma = c.cost_integral(2.0)?;
        // at t = τ(2) the conjugate equals 2·t − σ(2) (Fenchel–Young with equality)
        let conj = c.conjugate_value(tau);
        assert!(
            (conj - (2.0 * tau - sigma)).abs() < 1e-9 || matches!(c, LinkCost::Constant { .. })
        );
        let prox = c.prox_conjugate(tau + 1.0, 0.5);
        println!("{name:<9} {tau:>10.6} {sigma:>10.6} {conj:>10.6} {prox:>10.6}");
    }
    let bpr = costs[2].1;
    let f = bpr.conjugate_derivative(1.15)?;
    println!("bpr flow at t = 1.15: {f:.6}");
    assert!((f - 2.0).abs() < 1e-9);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
