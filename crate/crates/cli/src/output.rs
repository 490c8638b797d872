use std::path::Path;

use retrofit::retrofit::{CertifiedBound, RetrofitDesign};
use retrofit::sim::{Prepared, RunResult, SweepRow};

use crate::{Failure, Outcome};

fn io(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Config(format!("{}: {e}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> Outcome<()> {
    std::fs::write(path, text).map_err(|e| io(path, e))
}

pub fn design_summary(d: &RetrofitDesign) -> String {
    let ports: Vec<String> = d.ports.indices().iter().map(|j| j.to_string()).collect();
    format!(
        "# ports [{}], rank {}, nu {}, tau {}, reduced spectral radius {:.6}",
        ports.join(", "),
        d.rank(),
        d.built.nu,
        d.tau(),
        d.built.spectral_radius
    )
}

/// `key = value` lines with the keys `epsilon, gamma_K, gamma1, gamma2,
/// gamma3, delta1, delta2, q0`. A missing `γ_K` is written as `nan`.
pub fn certificate_text(c: &CertifiedBound) -> String {
    let fields = [
        ("epsilon", c.epsilon),
        ("gamma_K", c.gamma_k.unwrap_or(f64::NAN)),
        ("gamma1", c.gamma1),
        ("gamma2", c.gamma2),
        ("gamma3", c.gamma3),
        ("delta1", c.delta1),
        ("delta2", c.delta2),
        ("q0", c.q0),
    ];
    let mut text = String::new();
    for (k, v) in fields {
        text.push_str(&format!("{k} = {}\n", toml::Value::Float(v)));
    }
    text
}

fn csv_text<F>(fill: F) -> Outcome<String>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    fill(&mut w).map_err(|e| Failure::Numerical(e.to_string()))?;
    let bytes = w.into_inner().map_err(|e| Failure::Numerical(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Failure::Numerical(e.to_string()))
}

pub fn run_summary(runs: &[(&str, &RunResult)]) -> Outcome<String> {
    csv_text(|w| {
        w.write_record([
            "run",
            "steps",
            "omega_l2",
            "theta_l2",
            "state_l2",
            "retrofit_input_l2",
            "preexisting_input_l2",
            "closed_loop_radius",
            "bound",
            "bound_pass",
        ])?;
        for (name, r) in runs {
            let fmt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
            let n = r.norms.as_ref();
            w.write_record([
                name.to_string(),
                (r.trajectory.len() - 1).to_string(),
                fmt(n.and_then(|n| n.omega)),
                fmt(n.and_then(|n| n.theta)),
                fmt(n.map(|n| n.state)),
                fmt(n.map(|n| n.retrofit_input)),
                fmt(n.map(|n| n.preexisting_input)),
                r.spectral_radius.to_string(),
                fmt(r.bound.map(|b| b.limit)),
                r.bound.map_or(String::new(), |b| b.pass.to_string()),
            ])?;
        }
        Ok(())
    })
}

/// Columns `t`, `theta_k` and `omega_k` for every appliance in network order
/// (generators first), `v_j` for every generator and `vhat_j` for the ports,
/// all 1-based. Input columns are empty on the terminal row.
pub fn write_trajectory(path: &Path, prep: &Prepared, r: &RunResult) -> Outcome<()> {
    let map = &prep.map;
    let n_gen = prep.network.generators();
    let ports = prep.ports.indices();
    let mut w = csv::Writer::from_path(path).map_err(|e| io(path, e))?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=map.theta.len()).map(|k| format!("theta_{k}")));
    header.extend((1..=map.omega.len()).map(|k| format!("omega_{k}")));
    header.extend((1..=n_gen).map(|j| format!("v_{j}")));
    header.extend(ports.iter().map(|j| format!("vhat_{}", j + 1)));
    w.write_record(&header).map_err(|e| io(path, e))?;
    let dt = r.trajectory.dt;
    for (t, x) in r.trajectory.states.iter().enumerate() {
        let mut row = vec![(t as f64 * dt).to_string()];
        row.extend(map.theta.iter().map(|&i| x[i].to_string()));
        row.extend(map.omega.iter().map(|&i| x[i].to_string()));
        match (r.preexisting.get(t), r.retrofit.get(t)) {
            (Some(v), Some(vh)) => {
                row.extend(v.iter().map(|x| x.to_string()));
                row.extend(ports.iter().map(|&j| vh[j].to_string()));
            }
            _ => row.extend(std::iter::repeat(String::new()).take(n_gen + ports.len())),
        }
        w.write_record(&row).map_err(|e| io(path, e))?;
    }
    w.flush().map_err(|e| io(path, e))
}

pub fn sweep_table(rows: &[SweepRow]) -> Outcome<String> {
    csv_text(|w| {
        for r in rows {
            w.serialize(r)?;
        }
        Ok(())
    })
}

/// Parses `all` or a comma list of ranks and inclusive `a-b` ranges, each
/// within `1..=n`.
pub fn parse_rank_grid(text: &str, n: usize) -> Result<Vec<usize>, String> {
    let mut ranks = Vec::new();
    for item in text.split(',').map(str::trim) {
        let parse = |s: &str| s.trim().parse::<usize>().map_err(|_| format!("bad rank '{s}' in --rank-grid"));
        match item.split_once('-') {
            _ if item == "all" => ranks.extend(1..=n),
            Some((a, b)) => {
                let (a, b) = (parse(a)?, parse(b)?);
                if a > b {
                    return Err(format!("empty rank range '{item}'"));
                }
                ranks.extend(a..=b);
            }
            None => ranks.push(parse(item)?),
        }
    }
    if let Some(bad) = ranks.iter().find(|&&r| r == 0 || r > n) {
        return Err(format!("rank {bad} outside 1..={n}"));
    }
    ranks.sort_unstable();
    ranks.dedup();
    Ok(ranks)
}
