//! Summary of a run directory built only from its artifacts.

use std::path::Path;

use effstab::flow::DriftConstants;
use effstab::pipeline::{
    sha256_hex, BnfArtifact, Branch, DiosetArtifact, Manifest, PoschelArtifact, StabilityArtifact,
};
use effstab::{Error, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Serialize)]
pub struct BnfLine {
    pub r: f64,
    pub order: u32,
    pub remainder_bound: f64,
}

#[derive(Serialize)]
pub struct DiosetLine {
    pub r: f64,
    pub tau_bar: f64,
    pub gamma_bar: f64,
    pub complement_fraction: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

#[derive(Serialize)]
pub struct PoschelLine {
    pub mode_cutoff: u32,
    pub remainder_bound: f64,
    pub law_scale: f64,
    pub law_ratio: f64,
}

#[derive(Serialize)]
pub struct StabilityLine {
    pub r: f64,
    pub n_orbits: usize,
    pub worst_action_drift: f64,
    pub worst_angle_dev: f64,
    pub n_escaped: usize,
    pub median_escape_time: Option<f64>,
    pub within_bounds: Option<bool>,
}

#[derive(Serialize)]
pub struct Report {
    pub command: String,
    pub branch: Option<Branch>,
    pub l: Option<usize>,
    pub m_star: Option<u32>,
    pub russmann_nondegenerate: Option<bool>,
    pub bnf: Vec<BnfLine>,
    pub dioset: Option<DiosetLine>,
    pub poschel: Option<PoschelLine>,
    pub constants: Option<DriftConstants>,
    pub stability: Vec<StabilityLine>,
}

/// Reads an artifact listed in the manifest after checking its hash.
fn load<T: DeserializeOwned>(dir: &Path, manifest: &Manifest, name: &str) -> Result<Option<T>> {
    let Some(entry) = manifest.artifacts.iter().find(|a| a.file == name) else {
        return Ok(None);
    };
    let bytes = std::fs::read(dir.join(name))?;
    let hash = sha256_hex(&bytes);
    if hash != entry.sha256 {
        return Err(Error::Config(format!(
            "{name} does not match the manifest (sha256 {hash}, expected {})",
            entry.sha256
        )));
    }
    Ok(Some(serde_json::from_slice(&bytes)?))
}

fn csv(rep: &Report) -> String {
    let mut s = String::from("r,order,remainder_bound,worst_action_drift,worst_angle_dev,median_escape_time\n");
    for b in &rep.bnf {
        let st = rep.stability.iter().find(|l| l.r == b.r);
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        s.push_str(&format!(
            "{:e},{},{:e},{},{},{}\n",
            b.r,
            b.order,
            b.remainder_bound,
            opt(st.map(|l| l.worst_action_drift)),
            opt(st.map(|l| l.worst_angle_dev)),
            opt(st.and_then(|l| l.median_escape_time))
        ));
    }
    s
}

/// Builds the report for `dir` and writes `report.json` and `report.csv`
/// next to the artifacts.
pub fn write(dir: &Path) -> Result<Report> {
    let manifest = Manifest::read(dir).map_err(|e| Error::Config(format!("{}: {e}", dir.display())))?;
    let bnf: Option<BnfArtifact> = load(dir, &manifest, "bnf.json")?;
    // the geometry summary is already in the manifest; still verify its hash
    let _: Option<serde_json::Value> = load(dir, &manifest, "geometry.json")?;
    let dioset: Option<DiosetArtifact> = load(dir, &manifest, "dioset.json")?;
    let poschel: Option<PoschelArtifact> = load(dir, &manifest, "poschel.json")?;
    let stability: Option<StabilityArtifact> = load(dir, &manifest, "stability.json")?;
    let rep = Report {
        command: manifest.command.clone(),
        branch: manifest.branch,
        l: manifest.l,
        m_star: manifest.m_star,
        russmann_nondegenerate: manifest.russmann_nondegenerate,
        bnf: bnf
            .map(|b| {
                b.table
                    .iter()
                    .map(|row| BnfLine {
                        r: row.r,
                        order: row.order,
                        remainder_bound: row.remainder_bound,
                    })
                    .collect()
            })
            .unwrap_or_default(),
        dioset: dioset.map(|d| DiosetLine {
            r: d.r,
            tau_bar: d.spec.tau,
            gamma_bar: d.spec.gamma,
            complement_fraction: d.report.as_ref().map(|x| x.complement_fraction),
            ci_low: d.report.as_ref().map(|x| x.ci_low),
            ci_high: d.report.as_ref().map(|x| x.ci_high),
        }),
        poschel: poschel.map(|p| PoschelLine {
            mode_cutoff: p.report.mode_cutoff,
            remainder_bound: p.report.normal_form.remainder_norm.value,
            law_scale: p.report.law_scale,
            law_ratio: p.report.law_ratio,
        }),
        constants: stability.as_ref().and_then(|s| s.constants),
        stability: stability
            .map(|s| {
                s.reports
                    .iter()
                    .map(|r| StabilityLine {
                        r: r.r,
                        n_orbits: r.summary.n_orbits,
                        worst_action_drift: r.summary.worst_action_drift,
                        worst_angle_dev: r.summary.worst_angle_dev,
                        n_escaped: r.summary.n_escaped,
                        median_escape_time: r.summary.median_escape_time,
                        within_bounds: r.summary.within_bounds,
                    })
                    .collect()
            })
            .unwrap_or_default(),
    };
    let mut json = serde_json::to_vec_pretty(&rep)?;
    json.push(b'\n');
    std::fs::write(dir.join("report.json"), json)?;
    std::fs::write(dir.join("report.csv"), csv(&rep))?;
    Ok(rep)
}
