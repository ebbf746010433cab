// One network loading at fixed edge times: potentials, flows, gradient.

use std::error::Error;
use std::path::Path;

use hsue::cli::{parse_network, parse_times};
use hsue::loading::{dual_smooth_value, network_loading};
use hsue::Network;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let net = Network::new(parse_network(&dir.join("two_level.json"))?)?;
    let t = parse_times(&dir.join("two_level_times.csv"), &net)?;

    let load = network_loading(&net, &t)?;
    println!("smooth dual value {:.12}", load.psi1);
    for (k, lvl) in load.levels.iter().enumerate() {
        println!("level {} (entropy {:.6})", k + 1, lvl.entropy);
        for (e, edge) in net.level(k).edges.iter().enumerate() {
            println!(
                "  {:<3} weight {:>9.6}  flow {:>9.6}",
                edge.id, lvl.weights[e], lvl.flows[e]
            );
        }
    }

    // the gradient is minus the plain flows; check one coordinate by finite differences
    let g = load.gradient(&net);
    let h = 1e-6;
    let (mut up, mut down) = (t.clone(), t.clone());
    up.0[0] += h;
    down.0[0] -= h;
    let fd = (dual_smooth_value(&net, &up)? - dual_smooth_value(&net, &down)?) / (2.0 * h);
    println!(
        "d/dt[{}]: analytic {:.8}, finite difference {:.8}",
        net.plain_edge_id(0),
        g[0],
        fd
    );
    assert!((fd - g[0]).abs() < 1e-6);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
