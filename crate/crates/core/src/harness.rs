//! Scenario generation, paired Monte Carlo sweeps over the benchmark schemes and
//! CSV output.
//!
//! Every trial seed is derived from the base seed and the trial index only, so
//! all schemes and sweep values see the same users, scatterers and coupling.

use std::f64::consts::PI;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ao::{run_scheme, AoConfig, Scheme, SolutionState};
use crate::channel::{dbm_to_watts, sample_coupling, PatternParams, Scene};
use crate::error::{Error, Result};
use crate::geometry::{build_upa_positions, Vec3};
use crate::manifold::SmoothingParams;

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Stream identifiers for seed splitting.
const STREAM_USERS: u64 = 1;
const STREAM_SCATTERERS: u64 = 2;
const STREAM_COUPLING: u64 = 3;

/// Parameter varied by a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    RateBpsHz,
    ThetaMaxRad,
    DirectivityP,
    /// Square array with Mx = My = value.
    ArraySide,
    NumUsers,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::RateBpsHz => "rate_bps_hz",
            SweepParam::ThetaMaxRad => "theta_max_rad",
            SweepParam::DirectivityP => "directivity_p",
            SweepParam::ArraySide => "array_side",
            SweepParam::NumUsers => "num_users",
        }
    }

    const ALL: [SweepParam; 5] = [
        SweepParam::RateBpsHz,
        SweepParam::ThetaMaxRad,
        SweepParam::DirectivityP,
        SweepParam::ArraySide,
        SweepParam::NumUsers,
    ];
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SweepParam::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown sweep parameter `{s}`")))
    }
}

fn default_schemes() -> Vec<Scheme> {
    Scheme::ALL.to_vec()
}

/// Simulation and sweep settings, read from a flat JSON object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub carrier_frequency_hz: f64,
    pub mx: usize,
    pub my: usize,
    pub num_scatterers: usize,
    pub num_users: usize,
    pub noise_dbm: f64,
    pub rate_bps_hz: f64,
    pub directivity_p: f64,
    pub chi: f64,
    pub theta_max_rad: f64,
    pub scatter_loss: f64,
    pub user_distance_m: [f64; 2],
    pub user_angle_deg: [f64; 2],
    pub scatterer_distance_m: [f64; 2],
    pub scatterer_angle_deg: [f64; 2],
    pub mu: f64,
    pub alpha: f64,
    pub normalize_sinr: bool,
    pub max_outer: usize,
    pub sweep_param: Option<SweepParam>,
    pub sweep_values: Vec<f64>,
    pub trials: usize,
    pub base_seed: u64,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<Scheme>,
    pub jobs: Option<usize>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            carrier_frequency_hz: 2.4e9,
            mx: 4,
            my: 4,
            num_scatterers: 8,
            num_users: 5,
            noise_dbm: -80.0,
            rate_bps_hz: 2.0,
            directivity_p: 2.0,
            chi: 0.9,
            theta_max_rad: PI / 5.0,
            scatter_loss: 0.1,
            user_distance_m: [30.0, 60.0],
            user_angle_deg: [0.0, 70.0],
            scatterer_distance_m: [10.0, 50.0],
            scatterer_angle_deg: [0.0, 70.0],
            mu: 10.0,
            alpha: 20.0,
            normalize_sinr: false,
            max_outer: 50,
            sweep_param: None,
            sweep_values: Vec::new(),
            trials: 50,
            base_seed: 1,
            schemes: default_schemes(),
            jobs: None,
        }
    }
}

fn check_range(name: &str, r: [f64; 2], lo: f64) -> Result<()> {
    if !(r[0] >= lo && r[1] >= r[0] && r[1].is_finite()) {
        return Err(Error::Config(format!(
            "{name} must be an ordered pair with values >= {lo}, got {r:?}"
        )));
    }
    Ok(())
}

impl SimConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SimConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        SimConfig::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.carrier_frequency_hz > 0.0) {
            return bad(format!(
                "carrier_frequency_hz must be positive, got {}",
                self.carrier_frequency_hz
            ));
        }
        if self.mx == 0 || self.my == 0 || self.num_users == 0 {
            return bad("mx, my and num_users must be at least 1".into());
        }
        if !self.noise_dbm.is_finite() {
            return bad("noise_dbm must be finite".into());
        }
        if !(self.rate_bps_hz > 0.0) {
            return bad(format!(
                "rate_bps_hz must be positive, got {}",
                self.rate_bps_hz
            ));
        }
        if !(self.directivity_p >= 0.0) {
            return bad(format!(
                "directivity_p must be >= 0, got {}",
                self.directivity_p
            ));
        }
        if !(0.0..=1.0).contains(&self.chi) {
            return bad(format!("chi must lie in [0, 1], got {}", self.chi));
        }
        if !(0.0..=PI / 2.0).contains(&self.theta_max_rad) {
            return bad(format!(
                "theta_max_rad must lie in [0, π/2], got {}",
                self.theta_max_rad
            ));
        }
        if !(self.scatter_loss > 0.0) {
            return bad("scatter_loss must be positive".into());
        }
        check_range("user_distance_m", self.user_distance_m, 1e-9)?;
        check_range("scatterer_distance_m", self.scatterer_distance_m, 1e-9)?;
        check_range("user_angle_deg", self.user_angle_deg, 0.0)?;
        check_range("scatterer_angle_deg", self.scatterer_angle_deg, 0.0)?;
        if self.user_angle_deg[1] > 180.0 || self.scatterer_angle_deg[1] > 180.0 {
            return bad("polar angles must not exceed 180 degrees".into());
        }
        if !(self.mu > 0.0 && self.alpha > 0.0) {
            return bad("mu and alpha must be positive".into());
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.schemes.is_empty() {
            return bad("schemes must not be empty".into());
        }
        if self.jobs == Some(0) {
            return bad("jobs must be at least 1".into());
        }
        if self.sweep_values.windows(2).any(|w| !(w[1] > w[0])) {
            return bad("sweep_values must be strictly increasing".into());
        }
        if self.sweep_param.is_some() && self.sweep_values.is_empty() {
            return bad("sweep_param needs at least one sweep value".into());
        }
        for v in &self.sweep_values {
            self.with_value(*v)?;
        }
        Ok(())
    }

    /// Copy with the swept parameter set to `value`.
    pub fn with_value(&self, value: f64) -> Result<SimConfig> {
        let mut cfg = self.clone();
        let Some(param) = self.sweep_param else {
            return Ok(cfg);
        };
        let count = |v: f64| {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::Config(format!(
                    "{param} values must be positive integers, got {v}"
                )))
            }
        };
        match param {
            SweepParam::RateBpsHz => cfg.rate_bps_hz = value,
            SweepParam::ThetaMaxRad => cfg.theta_max_rad = value,
            SweepParam::DirectivityP => cfg.directivity_p = value,
            SweepParam::ArraySide => {
                cfg.mx = count(value)?;
                cfg.my = cfg.mx;
            }
            SweepParam::NumUsers => cfg.num_users = count(value)?,
        }
        cfg.sweep_param = None;
        cfg.sweep_values.clear();
        let mut check = cfg.clone();
        check.sweep_values.clear();
        check.validate()?;
        Ok(cfg)
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency_hz
    }

    pub fn ao_config(&self) -> AoConfig {
        AoConfig {
            smoothing: SmoothingParams {
                mu: self.mu,
                alpha: self.alpha,
                normalize_sinr: self.normalize_sinr,
                ..Default::default()
            },
            max_outer: self.max_outer,
            ..Default::default()
        }
    }

    /// Sweep points; a config without a sweep is a single point.
    pub fn points(&self) -> Vec<f64> {
        match self.sweep_param {
            Some(_) => self.sweep_values.clone(),
            None => vec![self.current_value(SweepParam::RateBpsHz)],
        }
    }

    fn current_value(&self, param: SweepParam) -> f64 {
        match param {
            SweepParam::RateBpsHz => self.rate_bps_hz,
            SweepParam::ThetaMaxRad => self.theta_max_rad,
            SweepParam::DirectivityP => self.directivity_p,
            SweepParam::ArraySide => self.mx as f64,
            SweepParam::NumUsers => self.num_users as f64,
        }
    }
}

/// Seed of trial `trial` under `base_seed` (SplitMix64 finalizer).
pub fn trial_seed(base_seed: u64, trial: usize) -> u64 {
    let mut z = base_seed.wrapping_add((trial as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn sample_point(rng: &mut ChaCha8Rng, dist: [f64; 2], angle_deg: [f64; 2]) -> Vec3 {
    let d = rng.gen_range(dist[0]..=dist[1]);
    let theta = rng.gen_range(angle_deg[0]..=angle_deg[1]).to_radians();
    let phi = rng.gen_range(0.0..2.0 * PI);
    Vec3::new(
        d * theta.sin() * phi.cos(),
        d * theta.sin() * phi.sin(),
        d * theta.cos(),
    )
}

/// Random scene for one trial. Users, scatterers and coupling draw from
/// separate streams, so changing K or L leaves the other draws intact.
pub fn generate_scene(config: &SimConfig, seed: u64) -> Result<Scene> {
    let lambda = config.wavelength();
    let (k, l) = (config.num_users, config.num_scatterers);
    let mut users_rng = stream(seed, STREAM_USERS);
    let users = (0..k)
        .map(|_| {
            sample_point(
                &mut users_rng,
                config.user_distance_m,
                config.user_angle_deg,
            )
        })
        .collect();
    let mut scat_rng = stream(seed, STREAM_SCATTERERS);
    let scatterers = (0..l)
        .map(|_| {
            sample_point(
                &mut scat_rng,
                config.scatterer_distance_m,
                config.scatterer_angle_deg,
            )
        })
        .collect();
    let mut coup_rng = stream(seed, STREAM_COUPLING);
    let coupling = (0..k * l)
        .map(|_| sample_coupling(config.chi, &mut coup_rng))
        .collect::<Result<Vec<_>>>()?;
    let scene = Scene {
        antennas: build_upa_positions(config.mx, config.my, lambda / 2.0)?,
        users,
        scatterers,
        coupling,
        pattern: PatternParams::new(config.directivity_p, lambda, None)?,
        scatter_loss: config.scatter_loss,
        noise_w: vec![dbm_to_watts(config.noise_dbm); k],
        rate_targets: vec![config.rate_bps_hz; k],
        theta_max: config.theta_max_rad,
        seed,
    };
    scene.validate()?;
    Ok(scene)
}

/// Runs one scheme on the scene of `seed`. Infeasible problems give `Ok(None)`.
pub fn run_trial(config: &SimConfig, seed: u64, scheme: Scheme) -> Result<Option<SolutionState>> {
    let scene = generate_scene(config, seed)?;
    match run_scheme(&scene, scheme, &config.ao_config()) {
        Ok(state) if state.feasible() => Ok(Some(state)),
        Ok(_) => Ok(None),
        Err(e) if e.is_infeasible() => Ok(None),
        Err(e) => Err(e),
    }
}

/// Outcome of one (sweep value, trial, scheme) run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub sweep_value: f64,
    pub trial: usize,
    pub seed: u64,
    pub scheme: Scheme,
    /// Final power in watts; `None` when infeasible or failed.
    pub power_w: Option<f64>,
    pub iterations: usize,
}

/// Aggregate of one (sweep value, scheme) cell.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepCell {
    pub sweep_param: String,
    pub sweep_value: f64,
    pub scheme: Scheme,
    pub mean_power_dbm: Option<f64>,
    pub stderr_db: Option<f64>,
    pub n_feasible: usize,
    pub n_trials: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
    pub trials: Vec<TrialRecord>,
}

impl SweepResult {
    pub fn cell(&self, value: f64, scheme: Scheme) -> Option<&SweepCell> {
        self.cells
            .iter()
            .find(|c| c.sweep_value == value && c.scheme == scheme)
    }

    /// Per-trial powers of `scheme` at `value`, indexed by trial.
    pub fn powers(&self, value: f64, scheme: Scheme) -> Vec<Option<f64>> {
        let mut out: Vec<_> = self
            .trials
            .iter()
            .filter(|t| t.sweep_value == value && t.scheme == scheme)
            .collect();
        out.sort_by_key(|t| t.trial);
        out.into_iter().map(|t| t.power_w).collect()
    }
}

fn mean_and_stderr(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Cells from raw records. Means are over trials feasible for every scheme at
/// that sweep value, so schemes are compared on the same seeds.
pub fn aggregate(
    param: &str,
    values: &[f64],
    schemes: &[Scheme],
    trials: usize,
    records: &[TrialRecord],
) -> Vec<SweepCell> {
    let mut cells = Vec::new();
    for &value in values {
        let at: Vec<&TrialRecord> = records.iter().filter(|r| r.sweep_value == value).collect();
        let common: Vec<usize> = (0..trials)
            .filter(|t| {
                schemes.iter().all(|s| {
                    at.iter()
                        .any(|r| r.trial == *t && r.scheme == *s && r.power_w.is_some())
                })
            })
            .collect();
        for &scheme in schemes {
            let dbm: Vec<f64> = common
                .iter()
                .filter_map(|t| at.iter().find(|r| r.trial == *t && r.scheme == scheme))
                .filter_map(|r| r.power_w.map(crate::channel::watts_to_dbm))
                .collect();
            let (mean, se) = if dbm.is_empty() {
                (None, None)
            } else {
                let (m, s) = mean_and_stderr(&dbm);
                (Some(m), Some(s))
            };
            cells.push(SweepCell {
                sweep_param: param.to_string(),
                sweep_value: value,
                scheme,
                mean_power_dbm: mean,
                stderr_db: se,
                n_feasible: dbm.len(),
                n_trials: trials,
            });
        }
    }
    cells
}

/// Paired Monte Carlo sweep. `progress` is called once per finished sweep point.
pub fn run_sweep_with_progress(
    config: &SimConfig,
    mut progress: impl FnMut(&[SweepCell]),
) -> Result<SweepResult> {
    config.validate()?;
    let values = config.points();
    let param = config.sweep_param.map_or("none", SweepParam::name);
    let jobs = config
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;

    let mut records = Vec::new();
    let mut cells = Vec::new();
    for &value in &values {
        let cfg = config.with_value(value)?;
        let tasks: Vec<(usize, Scheme)> = (0..config.trials)
            .flat_map(|t| config.schemes.iter().map(move |s| (t, *s)))
            .collect();
        let out: Vec<Result<TrialRecord>> = pool.install(|| {
            tasks
                .par_iter()
                .map(|&(trial, scheme)| {
                    let seed = trial_seed(config.base_seed, trial);
                    let state = run_trial(&cfg, seed, scheme)?;
                    Ok(TrialRecord {
                        sweep_value: value,
                        trial,
                        seed,
                        scheme,
                        power_w: state.as_ref().map(SolutionState::power),
                        iterations: state.as_ref().map_or(0, SolutionState::iterations),
                    })
                })
                .collect()
        });
        let point: Vec<TrialRecord> = out.into_iter().collect::<Result<_>>()?;
        let point_cells = aggregate(param, &[value], &config.schemes, config.trials, &point);
        progress(&point_cells);
        records.extend(point);
        cells.extend(point_cells);
    }
    Ok(SweepResult {
        cells,
        trials: records,
    })
}

pub fn run_sweep(config: &SimConfig) -> Result<SweepResult> {
    run_sweep_with_progress(config, |_| {})
}

const HEADER: [&str; 7] = [
    "sweep_param",
    "sweep_value",
    "scheme",
    "mean_power_dbm",
    "stderr_db",
    "n_feasible",
    "n_trials",
];

fn opt(x: Option<f64>) -> String {
    x.map_or(String::new(), |v| format!("{v:.17e}"))
}

pub fn write_csv<W: Write>(cells: &[SweepCell], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(HEADER)?;
    for c in cells {
        wtr.write_record([
            c.sweep_param.clone(),
            format!("{}", c.sweep_value),
            c.scheme.to_string(),
            opt(c.mean_power_dbm),
            opt(c.stderr_db),
            c.n_feasible.to_string(),
            c.n_trials.to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::Io {
        path: "<sweep csv>".into(),
        source: e,
    })
}

pub fn emit_csv(result: &SweepResult, path: &Path) -> Result<()> {
    if result.cells.is_empty() {
        return Err(Error::invalid("sweep result is empty"));
    }
    let file = std::fs::File::create(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    write_csv(&result.cells, file)
}

pub fn parse_csv<R: Read>(input: R) -> Result<Vec<SweepCell>> {
    let mut rdr = csv::Reader::from_reader(input);
    if rdr.headers()?.iter().ne(HEADER) {
        return Err(Error::Config("unexpected sweep CSV header".into()));
    }
    let mut cells = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let bad = |what: &str| Error::Config(format!("malformed sweep CSV field {what}"));
        let num = |i: usize, what: &str| -> Result<Option<f64>> {
            let s = rec.get(i).unwrap_or("");
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad(what))
            }
        };
        cells.push(SweepCell {
            sweep_param: rec.get(0).unwrap_or("").to_string(),
            sweep_value: num(1, "sweep_value")?.ok_or_else(|| bad("sweep_value"))?,
            scheme: rec.get(2).unwrap_or("").parse()?,
            mean_power_dbm: num(3, "mean_power_dbm")?,
            stderr_db: num(4, "stderr_db")?,
            n_feasible: rec
                .get(5)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad("n_feasible"))?,
            n_trials: rec
                .get(6)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad("n_trials"))?,
        });
    }
    Ok(cells)
}
