//! File formats and the commands behind the `hsue` binary.
//!
//! Network file (JSON, strict):
//!
//! ```json
//! {"version": 1, "gammas": [1.0, 0.5], "walk_cap": 40,
//!  "levels": [{"nodes": ["a", "b"],
//!              "edges": [{"id": "e", "from": "a", "to": "b", "kind": "plain",
//!                         "cost": {"type": "affine", "a": 1, "b": 1}},
//!                        {"id": "p", "from": "a", "to": "b", "kind": "portal",
//!                         "target_od": {"level": 2, "od": 0}}],
//!              "od_pairs": [{"origin": "a", "destination": "b", "demand": 1}]},
//!             ...]}
//! ```
//!
//! `target_od.level` is 1-based like the level list is read by people;
//! `od` is the 0-based position in that level's `od_pairs`. `walk_cap` is
//! optional and only needed for cyclic levels.
//!
//! Exit codes: 0 success, 1 gap tolerance not reached, 2 input error,
//! 3 solver failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::costs::LinkCost;
use crate::loading::{network_loading, DualPoint, LoadResult, LoadingError};
use crate::model::{
    validate_hierarchy, Edge, EdgeKind, LevelGraph, Network, NetworkHierarchy, OdPair, OdRef,
    Violation,
};
use crate::oracle;
use crate::solver::{solve, SolveError, SolveStatus, SolverConfig};

pub const FORMAT_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_NOT_CONVERGED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: invalid network:\n{}", .violations.iter().map(|v| format!("  {v}")).collect::<Vec<_>>().join("\n"))]
    Invalid {
        path: PathBuf,
        violations: Vec<Violation>,
    },
    #[error("{path}: unsupported format version {version} (expected {FORMAT_VERSION})")]
    Version { path: PathBuf, version: u32 },
    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("{path}:{line}: {message}")]
    TimeFile {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: no time given for edge {edge:?} at level {level}")]
    MissingEdgeTime {
        path: PathBuf,
        level: usize,
        edge: String,
    },
    #[error(transparent)]
    Loading(#[from] LoadingError),
    #[error(transparent)]
    Solve(SolveError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Solve(SolveError::InvalidConfig(_) | SolveError::InvalidStart) => EXIT_INPUT,
            CliError::Solve(_) | CliError::Loading(_) => EXIT_SOLVER,
            _ => EXIT_INPUT,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    version: u32,
    gammas: Vec<f64>,
    levels: Vec<LevelFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    walk_cap: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LevelFile {
    nodes: Vec<String>,
    edges: Vec<EdgeFile>,
    od_pairs: Vec<OdFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum EdgeFile {
    Plain {
        id: String,
        from: String,
        to: String,
        cost: LinkCost,
    },
    Portal {
        id: String,
        from: String,
        to: String,
        target_od: OdRefFile,
    },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OdRefFile {
    level: usize,
    od: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OdFile {
    origin: String,
    destination: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    demand: Option<f64>,
}

impl From<NetworkFile> for NetworkHierarchy {
    fn from(f: NetworkFile) -> Self {
        NetworkHierarchy {
            gammas: f.gammas,
            walk_cap: f.walk_cap,
            levels: f
                .levels
                .into_iter()
                .map(|l| LevelGraph {
                    nodes: l.nodes,
                    edges: l
                        .edges
                        .into_iter()
                        .map(|e| match e {
                            EdgeFile::Plain { id, from, to, cost } => Edge {
                                id,
                                from,
                                to,
                                kind: EdgeKind::Plain { cost },
                            },
                            EdgeFile::Portal {
                                id,
                                from,
                                to,
                                target_od,
                            } => Edge {
                                id,
                                from,
                                to,
                                // file level 0 becomes an out-of-range level and fails validation
                                kind: EdgeKind::Portal {
                                    target_od: OdRef {
                                        level: target_od.level.checked_sub(1).unwrap_or(usize::MAX),
                                        od: target_od.od,
                                    },
                                },
                            },
                        })
                        .collect(),
                    od_pairs: l
                        .od_pairs
                        .into_iter()
                        .map(|o| OdPair {
                            origin: o.origin,
                            destination: o.destination,
                            demand: o.demand,
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

impl From<&NetworkHierarchy> for NetworkFile {
    fn from(h: &NetworkHierarchy) -> Self {
        NetworkFile {
            version: FORMAT_VERSION,
            gammas: h.gammas.clone(),
            walk_cap: h.walk_cap,
            levels: h
                .levels
                .iter()
                .map(|l| LevelFile {
                    nodes: l.nodes.clone(),
                    edges: l
                        .edges
                        .iter()
                        .map(|e| match e.kind {
                            EdgeKind::Plain { cost } => EdgeFile::Plain {
                                id: e.id.clone(),
                                from: e.from.clone(),
                                to: e.to.clone(),
                                cost,
                            },
                            EdgeKind::Portal { target_od } => EdgeFile::Portal {
                                id: e.id.clone(),
                                from: e.from.clone(),
                                to: e.to.clone(),
                                target_od: OdRefFile {
                                    level: target_od.level.wrapping_add(1),
                                    od: target_od.od,
                                },
                            },
                        })
                        .collect(),
                    od_pairs: l
                        .od_pairs
                        .iter()
                        .map(|o| OdFile {
                            origin: o.origin.clone(),
                            destination: o.destination.clone(),
                            demand: o.demand,
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn json_error(path: &Path, e: serde_json::Error) -> CliError {
    CliError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

/// Parses and validates a network description; `path` is only used in errors.
pub fn parse_network_str(text: &str, path: &Path) -> Result<NetworkHierarchy, CliError> {
    let file: NetworkFile = serde_json::from_str(text).map_err(|e| json_error(path, e))?;
    if file.version != FORMAT_VERSION {
        return Err(CliError::Version {
            path: path.to_path_buf(),
            version: file.version,
        });
    }
    let h = NetworkHierarchy::from(file);
    let violations = validate_hierarchy(&h);
    if !violations.is_empty() {
        return Err(CliError::Invalid {
            path: path.to_path_buf(),
            violations,
        });
    }
    Ok(h)
}

pub fn parse_network(path: &Path) -> Result<NetworkHierarchy, CliError> {
    parse_network_str(&read(path)?, path)
}

/// Serializes to the network file format (pretty JSON, trailing newline).
pub fn network_to_json(h: &NetworkHierarchy) -> String {
    let mut s = serde_json::to_string_pretty(&NetworkFile::from(h)).expect("network serializes");
    s.push('\n');
    s
}

pub fn parse_config_str(text: &str, path: &Path) -> Result<SolverConfig, CliError> {
    let cfg: SolverConfig = serde_json::from_str(text).map_err(|e| json_error(path, e))?;
    cfg.validate().map_err(|e| CliError::Config {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<SolverConfig, CliError> {
    parse_config_str(&read(path)?, path)
}

/// Reads `level,edge_id,time` rows (1-based level; `#` lines and an optional
/// header are skipped) into a dual point. Every plain edge needs a time.
pub fn parse_times_str(text: &str, path: &Path, net: &Network) -> Result<DualPoint, CliError> {
    let mut t: Vec<Option<f64>> = vec![None; net.plain_edges().len()];
    let err = |line: usize, message: String| CliError::TimeFile {
        path: path.to_path_buf(),
        line,
        message,
    };
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let s = raw.trim();
        if s.is_empty() || s.starts_with('#') || s == "level,edge_id,time" {
            continue;
        }
        let cols: Vec<&str> = s.split(',').map(str::trim).collect();
        if cols.len() != 3 {
            return Err(err(line, format!("expected 3 columns, got {}", cols.len())));
        }
        let level: usize = cols[0]
            .parse()
            .map_err(|_| err(line, format!("bad level {:?}", cols[0])))?;
        let time: f64 = cols[2]
            .parse()
            .map_err(|_| err(line, format!("bad time {:?}", cols[2])))?;
        if !time.is_finite() {
            return Err(err(line, format!("time must be finite, got {}", cols[2])));
        }
        let idx = level
            .checked_sub(1)
            .and_then(|k| net.plain_index(k, cols[1]))
            .ok_or_else(|| {
                err(
                    line,
                    format!("no plain edge {:?} at level {level}", cols[1]),
                )
            })?;
        if t[idx].replace(time).is_some() {
            return Err(err(
                line,
                format!("duplicate time for edge {:?} at level {level}", cols[1]),
            ));
        }
    }
    t.into_iter()
        .enumerate()
        .map(|(i, v)| {
            v.ok_or_else(|| CliError::MissingEdgeTime {
                path: path.to_path_buf(),
                level: net.plain_edges()[i].level + 1,
                edge: net.plain_edge_id(i).to_string(),
            })
        })
        .collect::<Result<Vec<_>, _>>()
        .map(DualPoint)
}

pub fn parse_times(path: &Path, net: &Network) -> Result<DualPoint, CliError> {
    parse_times_str(&read(path)?, path, net)
}

/// Provenance of one command invocation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub network_path: PathBuf,
    pub config_path: Option<PathBuf>,
    pub t_file_path: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// SHA-256 of each input file, keyed by role.
    pub input_digests: BTreeMap<String, String>,
}

impl RunManifest {
    fn new(command: &str, io: &IoArgs) -> Result<Self, CliError> {
        let mut input_digests = BTreeMap::new();
        let mut digest = |role: &str, p: &Path| -> Result<(), CliError> {
            let bytes = fs::read(p).map_err(|source| CliError::Io {
                path: p.to_path_buf(),
                source,
            })?;
            input_digests.insert(role.to_string(), hex::encode(Sha256::digest(&bytes)));
            Ok(())
        };
        digest("network", &io.network)?;
        if let Some(c) = &io.config {
            digest("config", c)?;
        }
        if let Some(t) = &io.t_file {
            digest("t_file", t)?;
        }
        Ok(RunManifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            network_path: io.network.clone(),
            config_path: io.config.clone(),
            t_file_path: io.t_file.clone(),
            out_dir: io.out.clone().unwrap_or_default(),
            input_digests,
        })
    }

    /// Header lines for CSV outputs. The output directory is left out so that
    /// identical inputs give identical files wherever they are written.
    pub fn csv_header(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# hsue {} {}", self.tool_version, self.command);
        let _ = writeln!(s, "# network: {}", self.network_path.display());
        if let Some(c) = &self.config_path {
            let _ = writeln!(s, "# config: {}", c.display());
        }
        if let Some(t) = &self.t_file_path {
            let _ = writeln!(s, "# t_file: {}", t.display());
        }
        for (role, d) in &self.input_digests {
            let _ = writeln!(s, "# sha256 {role}: {d}");
        }
        s
    }

    fn header_json(&self) -> serde_json::Value {
        serde_json::json!({
            "command": self.command,
            "tool_version": self.tool_version,
            "network_path": self.network_path,
            "config_path": self.config_path,
            "t_file_path": self.t_file_path,
            "input_digests": self.input_digests,
        })
    }
}

/// 17 significant digits, `.` separator.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

/// Rows `level,edge_id,flow,time` for every edge; the time of a portal edge
/// is its soft-min weight.
pub fn flows_csv(
    manifest: &RunManifest,
    net: &Network,
    flows: &[Vec<f64>],
    weights: &[Vec<f64>],
) -> String {
    let mut s = manifest.csv_header();
    s.push_str("level,edge_id,flow,time\n");
    for (k, level) in net.levels().iter().enumerate() {
        for (e, edge) in level.edges.iter().enumerate() {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                k + 1,
                edge.id,
                fmt_f64(flows[k][e]),
                fmt_f64(weights[k][e])
            );
        }
    }
    s
}

fn write(path: PathBuf, contents: &str) -> Result<(), CliError> {
    fs::write(&path, contents).map_err(|source| CliError::Io { path, source })
}

fn out_dir(io: &IoArgs) -> Result<PathBuf, CliError> {
    let dir = io.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|source| CliError::Io {
        path: dir.clone(),
        source,
    })?;
    Ok(dir)
}

fn load_network(io: &IoArgs) -> Result<Network, CliError> {
    let h = parse_network(&io.network)?;
    Network::new(h).map_err(|e| match e {
        crate::model::ModelError::Invalid(violations) => CliError::Invalid {
            path: io.network.clone(),
            violations,
        },
        other => CliError::Config {
            path: io.network.clone(),
            message: other.to_string(),
        },
    })
}

#[derive(Debug, Clone, Args)]
pub struct IoArgs {
    /// Network file (JSON).
    #[arg(long)]
    pub network: PathBuf,
    /// Solver configuration (JSON); defaults apply to missing keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Edge times as `level,edge_id,time` rows.
    #[arg(long = "t-file")]
    pub t_file: Option<PathBuf>,
}

#[derive(Debug, Parser)]
#[command(
    name = "hsue",
    version,
    about = "Stochastic user equilibrium in hierarchical congestion games"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Minimize the dual and write flows.csv, certificate.json, history.csv.
    Solve {
        #[command(flatten)]
        io: IoArgs,
        /// Fill the wall_time column of history.csv (makes it non-reproducible).
        #[arg(long)]
        timing: bool,
    },
    /// One network loading at the times of --t-file; writes flows.csv.
    Load {
        #[command(flatten)]
        io: IoArgs,
    },
    /// Check the network (and config, if given) and report violations.
    Validate {
        #[command(flatten)]
        io: IoArgs,
    },
    /// Compare the loading against explicit path enumeration.
    #[command(hide = true)]
    OracleCompare {
        #[command(flatten)]
        io: IoArgs,
    },
}

/// Parses arguments and runs one command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Solve { io, timing } => run_solve(io, *timing),
        Command::Load { io } => run_load(io),
        Command::Validate { io } => run_validate(io),
        Command::OracleCompare { io } => run_oracle_compare(io),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run_validate(io: &IoArgs) -> Result<i32, CliError> {
    let net = load_network(io)?;
    if let Some(c) = &io.config {
        parse_config(c)?;
    }
    let plain = net.plain_edges().len();
    let edges: usize = net.levels().iter().map(|l| l.edges.len()).sum();
    println!(
        "ok: {} level(s), {} edge(s) ({} plain), {} top-level od pair(s)",
        net.level_count(),
        edges,
        plain,
        net.top_demands().len()
    );
    Ok(EXIT_OK)
}

pub fn run_load(io: &IoArgs) -> Result<i32, CliError> {
    let net = load_network(io)?;
    if let Some(c) = &io.config {
        parse_config(c)?;
    }
    let t = match &io.t_file {
        Some(p) => parse_times(p, &net)?,
        None => DualPoint::free_flow(&net),
    };
    let manifest = RunManifest::new("load", io)?;
    let load = network_loading(&net, &t)?;
    let dir = out_dir(io)?;
    write(
        dir.join("flows.csv"),
        &flows_csv(&manifest, &net, &load.level_flows(), &weights(&load)),
    )?;
    Ok(EXIT_OK)
}

fn weights(load: &LoadResult) -> Vec<Vec<f64>> {
    load.levels.iter().map(|l| l.weights.clone()).collect()
}

pub fn run_solve(io: &IoArgs, timing: bool) -> Result<i32, CliError> {
    let net = load_network(io)?;
    let cfg = match &io.config {
        Some(c) => parse_config(c)?,
        None => SolverConfig::default(),
    };
    let start = match &io.t_file {
        Some(p) => Some(parse_times(p, &net)?),
        None => None,
    };
    let manifest = RunManifest::new("solve", io)?;
    let sol = solve(&net, &cfg, start).map_err(CliError::Solve)?;
    // portal weights at the final times
    let at_final = network_loading(&net, &sol.times)?;
    let dir = out_dir(io)?;
    write(
        dir.join("flows.csv"),
        &flows_csv(&manifest, &net, &sol.flows, &weights(&at_final)),
    )?;

    let c = &sol.certificate;
    let converged = sol.status == SolveStatus::Converged;
    let cert = serde_json::json!({
        "manifest": manifest.header_json(),
        "dual_value": c.dual_value,
        "primal_value": c.primal_value,
        "gap": c.gap,
        "T": c.iterations,
        "L2_diagnostic": sol.lipschitz_bound,
        "R2_estimate": sol.r2_estimate,
        "primal_kind": c.primal_kind,
        "gap_tol": cfg.gap_tol,
        "converged": converged,
    });
    let mut cert = serde_json::to_string_pretty(&cert).expect("certificate serializes");
    cert.push('\n');
    write(dir.join("certificate.json"), &cert)?;

    let mut h = manifest.csv_header();
    h.push_str("iter,L_used,n_func_evals,dual_value,gap,wall_time\n");
    for r in &sol.history {
        let _ = writeln!(
            h,
            "{},{},{},{},{},{}",
            r.iter,
            fmt_f64(r.l_used),
            r.n_func_evals,
            fmt_f64(r.dual_value),
            r.gap.map(fmt_f64).unwrap_or_default(),
            if timing {
                fmt_f64(r.wall_time)
            } else {
                String::new()
            }
        );
    }
    write(dir.join("history.csv"), &h)?;

    let mut m = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    m.push('\n');
    write(dir.join("manifest.json"), &m)?;

    eprintln!(
        "T = {}, gap = {:e}, dual = {}, primal = {}",
        c.iterations, c.gap, c.dual_value, c.primal_value
    );
    Ok(if converged {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    })
}

/// Largest componentwise difference between the DP loading and the flows of
/// the explicit logit path distribution, at the t-file times (free flow if
/// none). Exit 1 if it exceeds `1e-10`.
pub fn run_oracle_compare(io: &IoArgs) -> Result<i32, CliError> {
    let net = load_network(io)?;
    let cfg = match &io.config {
        Some(c) => parse_config(c)?,
        None => SolverConfig::default(),
    };
    let t = match &io.t_file {
        Some(p) => parse_times(p, &net)?,
        None => DualPoint::free_flow(&net),
    };
    if let Some(k) = net.levels().iter().position(|l| !l.is_acyclic()) {
        return Err(CliError::Config {
            path: io.network.clone(),
            message: format!(
                "level {} is cyclic; the path oracle enumerates simple paths only",
                k + 1
            ),
        });
    }
    let load = network_loading(&net, &t)?;
    let table =
        oracle::logit_path_table(&net, &t, cfg.path_budget).map_err(|e| CliError::Config {
            path: io.network.clone(),
            message: e.to_string(),
        })?;
    let reference = table.edge_flows(&net);
    let mut worst = 0.0f64;
    for (dp, or) in load.levels.iter().zip(&reference) {
        for (a, b) in dp.flows.iter().zip(or) {
            let d = (a - b).abs();
            worst = worst.max(d);
        }
    }
    println!(
        "paths: {}",
        table
            .levels
            .iter()
            .map(|l| l.iter().map(|o| o.paths.len()).sum::<usize>())
            .sum::<usize>()
    );
    println!("max |dp - oracle| = {worst:e}");
    Ok(if worst <= 1e-10 {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    })
}
