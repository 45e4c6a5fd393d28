//! End-to-end runs: Birkhoff normal form, frequency geometry, Diophantine set,
//! second normalization and stability scan, each persisted as one JSON
//! artifact and linked from a manifest with content hashes.

use std::fmt;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::diophantine::DiophantineSpec;
use crate::dioset::{bar_tau, dioset_indicator, measure_complement, sample_ball, DiosetReport};
use crate::error::{Error, Result};
use crate::flow::{
    freeze_constants, integrate, stability_scan, DriftConstants, HorizonRule, Integrator, OrbitStart, ScanOptions,
    StabilityReport, TrajectoryMeta,
};
use crate::geometry::{beta_floor, span_and_order, BetaFloor, FrequencyGeometry};
use crate::normal_form::{
    poschel_normalize, pull_back, BirkhoffRun, FlowOptions, NormalFormDoc, NormalFormResult, PoschelDoc,
    PoschelOptions, PoschelReport, RemainderProfile, StabilityBudget,
};
use crate::poly::PolyMap;
use crate::series::FtSeries;

/// Grid points per axis for the non-degeneracy floor.
const BETA_GRID: usize = 21;
/// Proposals tried before a stage gives up looking for a Diophantine action.
const MAX_PROPOSALS: u64 = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Bnf,
    Geometry,
    Dioset,
    Poschel,
    Stability,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Bnf, Stage::Geometry, Stage::Dioset, Stage::Poschel, Stage::Stability];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Bnf => "bnf",
            Stage::Geometry => "geometry",
            Stage::Dioset => "dioset",
            Stage::Poschel => "poschel",
            Stage::Stability => "stability",
        }
    }

    pub fn file(self) -> String {
        format!("{}.json", self.name())
    }
}

/// A failure tagged with the stage it halted.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub source: Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage {} failed: {}", self.stage, self.source)
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

fn at<T>(stage: &'static str, r: Result<T>) -> std::result::Result<T, StageError> {
    r.map_err(|source| StageError { stage, source })
}

/// Which hypothesis the frequency geometry satisfies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// `V = R omega` (`l = 1`): every action of the ball is Diophantine.
    WholeBall,
    /// `2 <= l <= d - 1`: the Diophantine set is a proper subset of the ball.
    Intermediate,
    /// `V = R^d` (`l = d`): Rüssmann non-degenerate. The set is measured as in
    /// the intermediate case; the KAM construction itself is out of scope.
    FullRank,
}

impl Branch {
    pub fn of(l: usize, d: usize) -> Branch {
        if l <= 1 {
            Branch::WholeBall
        } else if l >= d {
            Branch::FullRank
        } else {
            Branch::Intermediate
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BnfRow {
    pub r: f64,
    pub order: u32,
    pub remainder_bound: f64,
    pub profile: RemainderProfile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BnfArtifact {
    pub dc: DiophantineSpec,
    pub m_cap: u32,
    pub degree_cap: u32,
    /// Optimal order and remainder bound at each configured radius.
    pub table: Vec<BnfRow>,
    /// Normal form at the optimal order of the working radius.
    pub working: NormalFormDoc,
}

impl BnfArtifact {
    pub fn csv(&self) -> String {
        let mut s = String::from("r,order,remainder_bound\n");
        for row in &self.table {
            s.push_str(&format!("{:e},{},{:e}\n", row.r, row.order, row.remainder_bound));
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryArtifact {
    pub geometry: FrequencyGeometry,
    pub branch: Branch,
    pub russmann_nondegenerate: bool,
    /// Non-degeneracy floor over the ball of twice the working radius.
    pub beta: BetaFloor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiosetArtifact {
    pub branch: Branch,
    pub r: f64,
    pub budget: StabilityBudget,
    /// `DC(tau_bar, gamma_bar)` with the indicator's mode cutoff.
    pub spec: DiophantineSpec,
    /// Monte Carlo measurement; absent on the whole-ball branch.
    pub report: Option<DiosetReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoschelArtifact {
    #[serde(rename = "I_star")]
    pub i_star: Vec<f64>,
    pub sample_index: u64,
    pub budget: StabilityBudget,
    pub report: PoschelDoc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityArtifact {
    pub dt: f64,
    pub steps: u64,
    pub constants: Option<DriftConstants>,
    pub reports: Vec<StabilityReport>,
}

impl StabilityArtifact {
    /// Plot-ready per-radius summary.
    pub fn csv(&self) -> String {
        let mut s = String::from(
            "r,n_orbits,median_action_drift,worst_action_drift,median_angle_dev,worst_angle_dev,n_escaped,median_escape_time\n",
        );
        for rep in &self.reports {
            let m = &rep.summary;
            s.push_str(&format!(
                "{:e},{},{:e},{:e},{:e},{:e},{},{:e}\n",
                rep.r,
                m.n_orbits,
                m.median_action_drift,
                m.worst_action_drift,
                m.median_angle_dev,
                m.worst_angle_dev,
                m.n_escaped,
                m.median_escape_time.unwrap_or(f64::INFINITY)
            ));
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: ExperimentConfig,
    pub hamiltonian_sha256: String,
    pub threads: usize,
    pub branch: Option<Branch>,
    pub l: Option<usize>,
    pub m_star: Option<u32>,
    pub russmann_nondegenerate: Option<bool>,
    /// One JSON artifact per completed stage.
    pub artifacts: Vec<FileEntry>,
    /// CSV tables and trajectory files.
    pub tables: Vec<FileEntry>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(dir.join("manifest.json"))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<FileEntry> {
    let path = dir.join(name);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(&path, bytes)?;
    Ok(FileEntry {
        file: name.to_string(),
        sha256: sha256_hex(bytes),
        bytes: bytes.len() as u64,
    })
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<FileEntry> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_file(dir, name, &bytes)
}

/// Uniform angles on the torus from a stream keyed by `(seed, index)`.
fn sample_angles(seed: u64, index: u64, d: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0fa9_91e5);
    rng.set_stream(index);
    (0..d).map(|_| rng.gen_range(0.0..1.0)).collect()
}

/// Stage outputs held in memory.
#[derive(Default)]
struct Outputs {
    bnf: Option<BnfArtifact>,
    normal_forms: Vec<NormalFormResult>,
    geometry: Option<GeometryArtifact>,
    dioset: Option<DiosetArtifact>,
    poschel: Option<PoschelArtifact>,
    stability: Option<StabilityArtifact>,
}

/// A resolved configuration with its Hamiltonian.
pub struct Pipeline {
    pub config: ExperimentConfig,
    pub hamiltonian: FtSeries,
    pub dc: DiophantineSpec,
}

impl Pipeline {
    pub fn new(cfg: &ExperimentConfig) -> Result<Pipeline> {
        let (config, hamiltonian) = cfg.resolve()?;
        let dc = config.diophantine()?;
        Ok(Pipeline {
            config,
            hamiltonian,
            dc,
        })
    }

    fn working_radius(&self) -> f64 {
        self.config.radii[0]
    }

    /// One normalization run to `m_cap`, read off at every radius.
    pub fn bnf(&self) -> Result<(BnfArtifact, Vec<NormalFormResult>)> {
        let m_cap = self.config.m_cap;
        let run = BirkhoffRun::new(&self.hamiltonian, m_cap, &self.dc, m_cap + 1)?;
        let mut table = Vec::new();
        let mut results = Vec::new();
        for &r in &self.config.radii {
            let opt = run.optimal_at(r)?;
            table.push(BnfRow {
                r,
                order: opt.order,
                remainder_bound: opt.result.remainder_norm.value,
                profile: opt.profile,
            });
            results.push(opt.result);
        }
        let art = BnfArtifact {
            dc: self.dc.clone(),
            m_cap,
            degree_cap: run.degree_cap(),
            table,
            working: results[0].to_doc(),
        };
        // the top-order normal form drives the geometry
        let top = run.result(m_cap, 0.5 * self.hamiltonian.rho(), 3.0 * self.working_radius())?;
        results.push(top);
        Ok((art, results))
    }

    pub fn geometry(&self, top: &NormalFormResult) -> Result<GeometryArtifact> {
        let d = self.hamiltonian.d();
        let mut geometry = span_and_order(&top.normal, self.config.m_cap, self.config.rank_tol)?;
        let f = PolyMap::gradient_of(&top.normal)?;
        let beta = beta_floor(&geometry, &f, 2.0 * self.working_radius(), BETA_GRID)?;
        geometry.beta = Some(beta.beta);
        let branch = Branch::of(geometry.l, d);
        Ok(GeometryArtifact {
            russmann_nondegenerate: branch == Branch::FullRank,
            branch,
            geometry,
            beta,
        })
    }

    /// `tau_bar` from the config, else from the stabilization order.
    fn tau_bar(&self, m_star: u32) -> f64 {
        self.config
            .tau_bar
            .unwrap_or_else(|| bar_tau(m_star, self.hamiltonian.d(), self.dc.tau))
    }

    fn budget(&self, mu: f64, geom: &GeometryArtifact) -> Result<StabilityBudget> {
        // a vanishing remainder (integrable input) still needs mu in (0, 1)
        let mu = mu.max(f64::MIN_POSITIVE);
        let b = StabilityBudget::new(self.dc.tau, self.tau_bar(geom.geometry.m_star), mu, self.config.c_nu)?;
        Ok(match geom.branch {
            Branch::WholeBall => b.override_gamma_bar(self.dc.gamma),
            _ => b,
        })
    }

    fn bar_spec(&self, budget: &StabilityBudget) -> Result<DiophantineSpec> {
        DiophantineSpec::new(
            self.dc.omega.clone(),
            budget.tau_bar,
            budget.gamma_bar,
            self.config.mode_cutoff_bar,
        )
    }

    pub fn dioset(&self, working: &NormalFormResult, geom: &GeometryArtifact) -> Result<DiosetArtifact> {
        let r = self.working_radius();
        let budget = self.budget(working.remainder_norm.value, geom)?;
        let spec = self.bar_spec(&budget)?;
        let report = match geom.branch {
            Branch::WholeBall => None,
            _ => {
                let f = PolyMap::gradient_of(&working.normal)?;
                Some(measure_complement(&f, r, &spec, self.config.n_samples, self.config.seed)?)
            }
        };
        Ok(DiosetArtifact {
            branch: geom.branch,
            r,
            budget,
            spec,
            report,
        })
    }

    /// True when `action` lies in the certified set at radius `r`.
    fn admissible(&self, f: &PolyMap, branch: Branch, action: &[f64], spec: &DiophantineSpec, r: f64) -> bool {
        match branch {
            Branch::WholeBall => true,
            _ => dioset_indicator(f, action, spec, r),
        }
    }

    fn second_stage(&self, working: &NormalFormResult, budget: &StabilityBudget, i_star: &[f64]) -> Result<PoschelReport> {
        let full = working.normal.add(&working.remainder)?;
        let spec = self.bar_spec(budget)?;
        poschel_normalize(&full, i_star, &spec, budget, PoschelOptions::default())
    }

    /// Second normalization at the first admissible sample of the working ball.
    pub fn poschel(&self, working: &NormalFormResult, dio: &DiosetArtifact) -> Result<PoschelArtifact> {
        let d = self.hamiltonian.d();
        let r = self.working_radius();
        let f = PolyMap::gradient_of(&working.normal)?;
        for idx in 0..MAX_PROPOSALS {
            let x = sample_ball(self.config.seed, idx, d, r);
            let i_star = &x[..d];
            if !self.admissible(&f, dio.branch, i_star, &dio.spec, r) {
                continue;
            }
            let rep = self.second_stage(working, &dio.budget, i_star)?;
            return Ok(PoschelArtifact {
                i_star: i_star.to_vec(),
                sample_index: idx,
                budget: dio.budget.clone(),
                report: rep.to_doc(),
            });
        }
        Err(Error::Hypothesis(format!(
            "no Diophantine action among {MAX_PROPOSALS} samples of the ball of radius {r}"
        )))
    }

    /// Orbits of the original Hamiltonian started at admissible actions of
    /// each radius, mapped back from normalized coordinates; the reference
    /// frequency is `grad N + grad G` at the start.
    pub fn stability(&self, results: &[NormalFormResult], geom: &GeometryArtifact) -> Result<StabilityArtifact> {
        let d = self.hamiltonian.d();
        let s = &self.config.stability;
        let dt = s.dt.min(Integrator::max_step(&self.hamiltonian));
        let radii = &self.config.radii;
        let mut budgets = Vec::new();
        for res in &results[..radii.len()] {
            budgets.push(self.budget(res.remainder_norm.value, geom)?);
        }
        let sample = |r: f64, seed: u64, idx: u64| -> Result<Option<OrbitStart>> {
            let j = radii.iter().position(|&x| x == r).expect("sampled radius is configured");
            let res = &results[j];
            let budget = &budgets[j];
            let spec = self.bar_spec(budget)?;
            let f = PolyMap::gradient_of(&res.normal)?;
            let x = sample_ball(seed, idx, d, r);
            let action = &x[..d];
            if !self.admissible(&f, geom.branch, action, &spec, r) {
                return Ok(None);
            }
            let second = match self.second_stage(res, budget, action) {
                Ok(p) => p,
                Err(e) if e.is_numerical() => return Ok(None),
                Err(e) => return Err(e),
            };
            let g0 = PolyMap::gradient_of(&second.g)?.eval(&vec![0.0; d]);
            let omega: Vec<f64> = f.eval(action).iter().zip(&g0).map(|(a, b)| a + b).collect();
            let theta = sample_angles(seed, idx, d);
            let (theta0, action0) = pull_back(&res.generators, &theta, action, FlowOptions::default())?;
            Ok(Some(OrbitStart { theta0, action0, omega }))
        };
        let opts = ScanOptions { dt, ..ScanOptions::default() };
        let mut reports = stability_scan(
            &self.hamiltonian,
            radii,
            s.n_orbits,
            &HorizonRule::fixed(s.steps),
            self.config.seed,
            sample,
            &opts,
        )?;
        for (rep, b) in reports.iter_mut().zip(&budgets) {
            rep.budget = Some(b.clone());
        }
        let constants = freeze_constants(&mut reports, s.margin);
        Ok(StabilityArtifact {
            dt,
            steps: s.steps,
            constants,
            reports,
        })
    }

    fn run_stages(&self, until: Stage) -> std::result::Result<Outputs, StageError> {
        let mut out = Outputs::default();
        let (bnf, results) = at("bnf", self.bnf())?;
        out.bnf = Some(bnf);
        out.normal_forms = results;
        if until == Stage::Bnf {
            return Ok(out);
        }
        let top = out.normal_forms.last().expect("top-order result");
        let geom = at("geometry", self.geometry(top))?;
        out.geometry = Some(geom);
        if until == Stage::Geometry {
            return Ok(out);
        }
        let geom = out.geometry.as_ref().unwrap();
        let working = &out.normal_forms[0];
        let dio = at("dioset", self.dioset(working, geom))?;
        if until >= Stage::Poschel {
            out.poschel = Some(at("poschel", self.poschel(working, &dio))?);
        }
        out.dioset = Some(dio);
        if until >= Stage::Stability {
            out.stability = Some(at("stability", self.stability(&out.normal_forms, geom))?);
        }
        Ok(out)
    }

    /// Runs every stage through `until` on a pool of `config.threads`
    /// workers, writes the artifacts and the manifest into `dir`, and returns
    /// the manifest.
    pub fn execute(&self, until: Stage, dir: &Path) -> std::result::Result<Manifest, StageError> {
        let pool = at(
            "setup",
            rayon::ThreadPoolBuilder::new()
                .num_threads(self.config.threads)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}"))),
        )?;
        let out = pool.install(|| self.run_stages(until))?;
        at("write", self.persist(until, &out, dir))
    }

    fn persist(&self, until: Stage, out: &Outputs, dir: &Path) -> Result<Manifest> {
        std::fs::create_dir_all(dir)?;
        let mut artifacts = Vec::new();
        let mut tables = Vec::new();
        let mut config = self.config.clone();
        if let Some(bnf) = &out.bnf {
            artifacts.push(write_json(dir, &Stage::Bnf.file(), bnf)?);
            tables.push(write_file(dir, "bnf.csv", bnf.csv().as_bytes())?);
        }
        if let Some(geom) = &out.geometry {
            config.tau_bar = Some(self.tau_bar(geom.geometry.m_star));
            artifacts.push(write_json(dir, &Stage::Geometry.file(), geom)?);
        }
        if let Some(dio) = &out.dioset {
            artifacts.push(write_json(dir, &Stage::Dioset.file(), dio)?);
        }
        if let Some(p) = &out.poschel {
            artifacts.push(write_json(dir, &Stage::Poschel.file(), p)?);
        }
        if let Some(st) = &out.stability {
            artifacts.push(write_json(dir, &Stage::Stability.file(), st)?);
            tables.push(write_file(dir, "stability.csv", st.csv().as_bytes())?);
        }
        let geom = out.geometry.as_ref();
        let manifest = Manifest {
            tool: "effstab".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: until.name().into(),
            hamiltonian_sha256: sha256_hex(self.hamiltonian.to_json().as_bytes()),
            threads: config.threads,
            config,
            branch: geom.map(|g| g.branch),
            l: geom.map(|g| g.geometry.l),
            m_star: geom.map(|g| g.geometry.m_star),
            russmann_nondegenerate: geom.map(|g| g.russmann_nondegenerate),
            artifacts,
            tables,
        };
        write_json(dir, "manifest.json", &manifest)?;
        Ok(manifest)
    }

    /// Integrates one orbit of the original Hamiltonian and stores it under
    /// `trajectories/` with its metadata sidecar.
    pub fn integrate(&self, dir: &Path) -> Result<(TrajectoryMeta, PathBuf)> {
        let d = self.hamiltonian.d();
        let ic = &self.config.integrate;
        let theta0 = ic.theta0.clone().unwrap_or_else(|| vec![0.0; d]);
        let action0 = ic.action0.clone().unwrap_or_else(|| {
            let mut a = vec![0.0; d];
            a[0] = 0.5 * self.working_radius();
            a
        });
        if theta0.len() != d || action0.len() != d {
            return Err(Error::Config(format!("theta0 and I0 need {d} entries")));
        }
        let dt = ic.dt.unwrap_or_else(|| 1e-3f64.min(Integrator::max_step(&self.hamiltonian)));
        let traj = integrate(&self.hamiltonian, &theta0, &action0, dt, ic.steps, ic.stride)?;
        let sub = dir.join("trajectories");
        std::fs::create_dir_all(&sub)?;
        traj.write(&sub, "orbit")?;
        Ok((traj.meta, sub.join("orbit.bin")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(name: &str) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::bundled(name);
        cfg.n_samples = 2000;
        cfg.m_cap = 6;
        cfg.stability.steps = 200;
        cfg.stability.n_orbits = 2;
        cfg
    }

    #[test]
    fn branch_follows_l() {
        assert_eq!(Branch::of(1, 3), Branch::WholeBall);
        assert_eq!(Branch::of(2, 3), Branch::Intermediate);
        assert_eq!(Branch::of(3, 3), Branch::FullRank);
    }

    #[test]
    fn integrable_input_has_zero_remainder() {
        let p = Pipeline::new(&quick("twist2")).unwrap();
        let (bnf, _) = p.bnf().unwrap();
        assert!(bnf.table.iter().all(|row| row.remainder_bound == 0.0));
    }

    #[test]
    fn line_example_takes_the_whole_ball_branch() {
        let p = Pipeline::new(&quick("line3")).unwrap();
        let (_, res) = p.bnf().unwrap();
        let geom = p.geometry(res.last().unwrap()).unwrap();
        assert_eq!(geom.branch, Branch::WholeBall);
        let dio = p.dioset(&res[0], &geom).unwrap();
        assert!(dio.report.is_none());
        assert_eq!(dio.budget.gamma_bar, p.dc.gamma);
    }

    #[test]
    fn twist_sets_the_full_rank_flag() {
        let p = Pipeline::new(&quick("twist3")).unwrap();
        let (_, res) = p.bnf().unwrap();
        let geom = p.geometry(res.last().unwrap()).unwrap();
        assert_eq!(geom.branch, Branch::FullRank);
        assert!(geom.russmann_nondegenerate);
    }
}
