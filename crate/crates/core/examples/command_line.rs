// Driving the `validate`, `load` and `solve` commands and reading their output files.

use std::error::Error;
use std::fs;
use std::path::Path;

use hsue::cli::{run, EXIT_INPUT, EXIT_NOT_CONVERGED, EXIT_OK};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let net = fixtures.join("two_edge.json");
    let net = net.to_str().ok_or("non-utf8 path")?;
    let out = tempfile::tempdir()?;
    let out_s = out.path().to_str().ok_or("non-utf8 path")?;

    assert_eq!(run(["hsue", "validate", "--network", net]), EXIT_OK);
    assert_eq!(
        run(["hsue", "solve", "--network", net, "--out", out_s]),
        EXIT_OK
    );
    for line in fs::read_to_string(out.path().join("flows.csv"))?
        .lines()
        .filter(|l| !l.starts_with('#'))
    {
        println!("flows.csv: {line}");
    }
    println!(
        "{}",
        fs::read_to_string(out.path().join("certificate.json"))?
    );

    let cfg = out.path().join("one_step.json");
    fs::write(&cfg, r#"{"max_iters": 1}"#)?;
    let cfg = cfg.to_str().ok_or("non-utf8 path")?;
    assert_eq!(
        run([
            "hsue",
            "solve",
            "--network",
            net,
            "--config",
            cfg,
            "--out",
            out_s
        ]),
        EXIT_NOT_CONVERGED
    );

    let times = fixtures.join("symmetric_times.csv");
    let sym = fixtures.join("symmetric.json");
    let code = run([
        "hsue",
        "load",
        "--network",
        sym.to_str().ok_or("non-utf8 path")?,
        "--t-file",
        times.to_str().ok_or("non-utf8 path")?,
        "--out",
        out_s,
    ]);
    assert_eq!(code, EXIT_OK);

    let broken = out.path().join("broken.json");
    fs::write(&broken, "{\"version\": 1,")?;
    assert_eq!(
        run([
            "hsue",
            "validate",
            "--network",
            broken.to_str().ok_or("non-utf8 path")?
        ]),
        EXIT_INPUT
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
