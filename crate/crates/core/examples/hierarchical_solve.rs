// Solving the two-level fixture and watching the duality gap shrink.

use std::error::Error;
use std::path::Path;

use hsue::cli::{parse_config, parse_network};
use hsue::solver::{solve, SolveStatus};
use hsue::Network;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let net = Network::new(parse_network(&dir.join("two_level.json"))?)?;
    let cfg = parse_config(&dir.join("two_level_config.json"))?;
    let sol = solve(&net, &cfg, None)?;
    assert_eq!(sol.status, SolveStatus::Converged);

    for r in sol
        .history
        .iter()
        .filter(|r| [1, 10, 30, 100, 300].contains(&r.iter))
    {
        let gap = r.gap.unwrap_or(f64::NAN);
        println!(
            "T {:>4}  L {:>4}  evals {:>5}  gap {gap:.3e}  T^2*gap {:.3e}",
            r.iter,
            r.l_used,
            r.n_func_evals,
            gap * (r.iter * r.iter) as f64
        );
    }
    let c = &sol.certificate;
    println!(
        "stopped at T = {} with gap {:.3e} ({:?})",
        c.iterations, c.gap, c.primal_kind
    );
    println!(
        "L bound {:.3}, R^2 estimate {:.3e}",
        sol.lipschitz_bound, sol.r2_estimate
    );
    for (k, level) in net.levels().iter().enumerate() {
        let row: Vec<String> = level
            .edges
            .iter()
            .zip(&sol.flows[k])
            .map(|(e, f)| format!("{}={f:.4}", e.id))
            .collect();
        println!("level {}: {}", k + 1, row.join(" "));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
