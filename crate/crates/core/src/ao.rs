//! Alternating optimization of rotations, polarization states and beamformers.
//!
//! Each outer iteration updates R → V → U → W. The R, V and U blocks maximize a
//! smoothed minimum SINR under the current W with penalty escalation, and a block
//! is only kept if the current W still meets every SINR target under the new
//! channels. W is then re-solved and kept only if it lowers the power, so the
//! per-iteration power never increases.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Matrix3, Vector2};
use serde::{Deserialize, Serialize};

use crate::beamforming::{solve_beamforming, BeamformingProblem, DcOptions};
use crate::channel::{watts_to_dbm, PolCombinerRx, PolStateTx, Propagation, Scene, C64};
use crate::error::{Error, Result};
use crate::geometry::{geodesic_from_ez, rotation_from_axis_angle, RotationMatrix, Vec3};
use crate::manifold::{
    rcg_minimize, BoresightModel, ComplexCircleProduct, ComplexSphereProduct, LinearRx, LinearTx,
    RcgOptions, RealSphereProduct, RotationModel, SmoothingParams, So3Product, SubproblemData,
};

/// Relative slack when checking SINR targets for block acceptance.
const ACCEPT_SLACK: f64 = 1e-9;
/// Absolute slack on the boresight elevation constraint.
const ANGLE_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Rotations and both polarization blocks.
    Proposed,
    /// Full rotations, polarization fixed at initialization.
    RotationOnly,
    /// Boresight direction only (zero roll), polarization fixed.
    BoresightOnly,
    /// Identity orientation, beamformers only.
    FixedUpa,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [
        Scheme::Proposed,
        Scheme::RotationOnly,
        Scheme::BoresightOnly,
        Scheme::FixedUpa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::RotationOnly => "rotation_only",
            Scheme::BoresightOnly => "boresight_only",
            Scheme::FixedUpa => "fixed_upa",
        }
    }

    fn blocks(self) -> BlockMask {
        match self {
            Scheme::Proposed => BlockMask {
                rotation: true,
                tx_pol: true,
                rx_pol: true,
            },
            Scheme::RotationOnly | Scheme::BoresightOnly => BlockMask {
                rotation: true,
                ..BlockMask::NONE
            },
            Scheme::FixedUpa => BlockMask::NONE,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme `{s}` (expected proposed, rotation_only, boresight_only or fixed_upa)")))
    }
}

/// Which variable blocks are updated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct BlockMask {
    pub rotation: bool,
    pub tx_pol: bool,
    pub rx_pol: bool,
}

impl BlockMask {
    pub const NONE: BlockMask = BlockMask {
        rotation: false,
        tx_pol: false,
        rx_pol: false,
    };

    fn without(self, frozen: BlockMask) -> BlockMask {
        BlockMask {
            rotation: self.rotation && !frozen.rotation,
            tx_pol: self.tx_pol && !frozen.tx_pol,
            rx_pol: self.rx_pol && !frozen.rx_pol,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AoConfig {
    /// Initial penalty weights and smoothing; λ's are reset to these at every block.
    pub smoothing: SmoothingParams,
    pub rcg: RcgOptions,
    /// Penalty escalations per block before the block is reverted.
    pub max_escalations: usize,
    pub max_outer: usize,
    /// Stop when the relative power change between outer iterations is at most this.
    pub rel_tol: f64,
    pub dc: DcOptions,
    /// Blocks frozen on top of what the scheme already fixes.
    pub freeze: BlockMask,
}

impl Default for AoConfig {
    fn default() -> Self {
        AoConfig {
            smoothing: SmoothingParams::default(),
            rcg: RcgOptions::default(),
            max_escalations: 8,
            max_outer: 50,
            rel_tol: 1e-3,
            dc: DcOptions::default(),
            freeze: BlockMask::NONE,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub power_w: f64,
    pub feasible: bool,
    pub block_reverts: usize,
}

impl TraceRow {
    pub fn power_dbm(&self) -> f64 {
        watts_to_dbm(self.power_w)
    }
}

#[derive(Clone, Debug)]
pub struct SolutionState {
    pub scheme: Scheme,
    /// Beamformers as columns, M × K.
    pub w: DMatrix<C64>,
    pub rotations: Vec<RotationMatrix>,
    pub tx: Vec<PolStateTx>,
    pub rx: Vec<PolCombinerRx>,
    /// Penalty weights reached by the most recent block updates.
    pub penalties: SmoothingParams,
    /// Power after each W update; entry 0 is the initialization.
    pub trace: Vec<TraceRow>,
    /// RCG iterations of every subproblem solve, in call order.
    pub inner_iterations: Vec<usize>,
    pub converged: bool,
}

impl SolutionState {
    pub fn power(&self) -> f64 {
        self.w.norm_squared()
    }

    pub fn power_dbm(&self) -> f64 {
        watts_to_dbm(self.power())
    }

    pub fn iterations(&self) -> usize {
        self.trace.len() - 1
    }

    pub fn feasible(&self) -> bool {
        self.trace.last().is_some_and(|t| t.feasible)
    }

    pub fn total_reverts(&self) -> usize {
        self.trace.iter().map(|t| t.block_reverts).sum()
    }

    pub fn write_trace<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["iter", "power_w", "power_dbm", "feasible", "block_reverts"])?;
        for row in &self.trace {
            wtr.write_record([
                row.iter.to_string(),
                format!("{:e}", row.power_w),
                row.power_dbm().to_string(),
                row.feasible.to_string(),
                row.block_reverts.to_string(),
            ])?;
        }
        wtr.flush().map_err(|e| Error::Io {
            path: "<trace>".into(),
            source: e,
        })
    }

    pub fn save_trace(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        self.write_trace(file)
    }
}

/// Read a trace CSV back as rows.
pub fn parse_trace<R: std::io::Read>(input: R) -> Result<Vec<TraceRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("").to_string();
        let bad = |what: &str| Error::Config(format!("malformed trace field {what}"));
        rows.push(TraceRow {
            iter: field(0).parse().map_err(|_| bad("iter"))?,
            power_w: field(1).parse().map_err(|_| bad("power_w"))?,
            feasible: field(3).parse().map_err(|_| bad("feasible"))?,
            block_reverts: field(4).parse().map_err(|_| bad("block_reverts"))?,
        });
    }
    Ok(rows)
}

struct Context<'a> {
    prop: Propagation,
    scene: &'a Scene,
    iota: Vec<f64>,
    cos_max: f64,
    config: &'a AoConfig,
}

impl Context<'_> {
    fn channels(
        &self,
        r: &[RotationMatrix],
        v: &[PolStateTx],
        u: &[PolCombinerRx],
    ) -> Vec<DVector<C64>> {
        self.prop.channels(r, v, u)
    }

    fn solve_w(&self, h: Vec<DVector<C64>>) -> Result<DMatrix<C64>> {
        let problem = BeamformingProblem::new(h, self.iota.clone(), self.scene.noise_w.clone())?;
        Ok(solve_beamforming(&problem, &self.config.dc)?.w)
    }

    /// Every user meets its target under `w` (relative slack `tol`).
    fn meets_targets(&self, h: &[DVector<C64>], w: &DMatrix<C64>, tol: f64) -> bool {
        crate::channel::sinr_and_rate(w, h, &self.scene.noise_w)
            .iter()
            .zip(&self.iota)
            .all(|((g, _), t)| *g >= t * (1.0 - tol))
    }

    fn data<'b>(&'b self, w: &'b DMatrix<C64>) -> SubproblemData<'b> {
        SubproblemData {
            prop: &self.prop,
            w,
            noise: &self.scene.noise_w,
            iota: &self.iota,
            cos_theta_max: self.cos_max,
        }
    }
}

/// Rotation about e_z × b that lowers the boresight b onto the cone b_z = cos θ_max.
fn clip_to_cone(b: &Vec3, cos_max: f64) -> Option<(Vec3, f64)> {
    if b.z >= cos_max {
        return None;
    }
    let axis = Vec3::z().cross(b);
    let n = axis.norm();
    let axis = if n > 1e-12 { axis / n } else { Vec3::x() };
    // b = cos(θ) e_z + sin(θ) ĥ with θ measured from e_z; rotate back by θ − θ_max
    let theta = b.z.clamp(-1.0, 1.0).acos();
    Some((axis, cos_max.clamp(-1.0, 1.0).acos() - theta))
}

fn repair_rotation(r: &Matrix3<f64>, cos_max: f64) -> RotationMatrix {
    let rm = RotationMatrix::from_matrix_unchecked(*r);
    match clip_to_cone(&rm.boresight(), cos_max) {
        None => rm,
        Some((axis, angle)) => rotation_from_axis_angle(&axis, angle)
            .map(|q| q.compose(&rm))
            .unwrap_or(rm),
    }
}

fn repair_boresight(b: &Vec3, cos_max: f64) -> Vec3 {
    let b = b.normalize();
    match clip_to_cone(&b, cos_max) {
        None => b,
        Some((axis, angle)) => match rotation_from_axis_angle(&axis, angle) {
            Ok(q) => q.matrix() * b,
            Err(_) => b,
        },
    }
}

fn angle_ok(r: &[RotationMatrix], cos_max: f64) -> bool {
    r.iter().all(|x| x.boresight_z() >= cos_max - ANGLE_SLACK)
}

/// Boresight steered from each antenna toward the user centroid, clipped to the cone.
fn centroid_rotations(scene: &Scene) -> Vec<RotationMatrix> {
    let centroid = scene.users.iter().fold(Vec3::zeros(), |a, b| a + b) / scene.num_users() as f64;
    let cos_max = scene.theta_max.cos();
    scene
        .antennas
        .iter()
        .map(|p| {
            let d = centroid - p;
            let b = if d.norm() > 0.0 {
                repair_boresight(&d, cos_max)
            } else {
                Vec3::z()
            };
            geodesic_from_ez(&b)
        })
        .collect()
}

/// Starting point of every scheme, with W solved for the initial channels.
///
/// Schemes that steer their boresights start from the centroid-steered
/// orientation unless the identity needs less power; fixed_upa always uses the identity.
pub fn initialize(scene: &Scene, scheme: Scheme, config: &AoConfig) -> Result<SolutionState> {
    let ctx = context(scene, config)?;
    initialize_with(&ctx, scheme)
}

fn context<'a>(scene: &'a Scene, config: &'a AoConfig) -> Result<Context<'a>> {
    let prop = Propagation::new(scene)?;
    if !(0.0..=std::f64::consts::PI).contains(&scene.theta_max) {
        return Err(Error::invalid("theta_max must lie in [0, π]"));
    }
    Ok(Context {
        iota: scene.sinr_targets(),
        cos_max: scene.theta_max.cos(),
        prop,
        scene,
        config,
    })
}

fn initialize_with(ctx: &Context, scheme: Scheme) -> Result<SolutionState> {
    let (m, k) = (ctx.scene.num_antennas(), ctx.scene.num_users());
    let v = vec![PolStateTx::vertical(); m];
    let u = vec![PolCombinerRx::equal(); k];
    let identity = vec![RotationMatrix::identity(); m];
    let w_id = ctx.solve_w(ctx.channels(&identity, &v, &u));

    let steer = scheme != Scheme::FixedUpa && ctx.scene.theta_max > 0.0;
    let (r, w) = if steer {
        let r0 = centroid_rotations(ctx.scene);
        match (ctx.solve_w(ctx.channels(&r0, &v, &u)), w_id) {
            (Ok(ws), Ok(wi)) if wi.norm_squared() < ws.norm_squared() => (identity, wi),
            (Ok(ws), _) => (r0, ws),
            (Err(_), Ok(wi)) => (identity, wi),
            (Err(e), Err(_)) => return Err(e),
        }
    } else {
        (identity, w_id?)
    };
    let power = w.norm_squared();
    let feasible = ctx.meets_targets(&ctx.channels(&r, &v, &u), &w, 1e-6);
    Ok(SolutionState {
        scheme,
        w,
        rotations: r,
        tx: v,
        rx: u,
        penalties: ctx.config.smoothing,
        trace: vec![TraceRow {
            iter: 0,
            power_w: power,
            feasible,
            block_reverts: 0,
        }],
        inner_iterations: Vec::new(),
        converged: false,
    })
}

/// Proposed scheme with default settings.
pub fn run(scene: &Scene, config: &AoConfig) -> Result<SolutionState> {
    run_scheme(scene, Scheme::Proposed, config)
}

/// Initialize and run the alternating loop for one benchmark scheme.
pub fn run_scheme(scene: &Scene, scheme: Scheme, config: &AoConfig) -> Result<SolutionState> {
    let ctx = context(scene, config)?;
    let mut state = initialize_with(&ctx, scheme)?;
    let mut blocks = scheme.blocks().without(config.freeze);
    if scene.theta_max <= 0.0 {
        // the cone has collapsed to the identity orientation
        blocks.rotation = false;
    }

    for iter in 1..=config.max_outer {
        let mut reverts = 0;
        if blocks.rotation {
            let ok = if scheme == Scheme::BoresightOnly {
                update_boresight(&ctx, &mut state)
            } else {
                update_rotation(&ctx, &mut state)
            };
            reverts += usize::from(!ok);
        }
        if blocks.tx_pol {
            reverts += usize::from(!update_tx(&ctx, &mut state));
        }
        if blocks.rx_pol {
            reverts += usize::from(!update_rx(&ctx, &mut state));
        }

        let h = ctx.channels(&state.rotations, &state.tx, &state.rx);
        let prev = state.power();
        if let Ok(w) = ctx.solve_w(h.clone()) {
            if w.norm_squared() <= prev && ctx.meets_targets(&h, &w, 1e-6) {
                state.w = w;
            }
        }
        let power = state.power();
        let feasible = ctx.meets_targets(&h, &state.w, 1e-6);
        state.trace.push(TraceRow {
            iter,
            power_w: power,
            feasible,
            block_reverts: reverts,
        });
        if (prev - power).abs() <= config.rel_tol * prev {
            state.converged = true;
            break;
        }
    }
    Ok(state)
}

/// Outcome of one penalized block solve.
enum Attempt<A> {
    Accept(A),
    /// Violated families: (thresh, angle).
    Violated(bool, bool),
}

/// Runs `solve` with escalating penalties until `check` accepts, or gives up.
fn penalty_loop<P, A>(
    ctx: &Context,
    x0: P,
    state: &mut SolutionState,
    escalate: impl Fn(&mut SmoothingParams, bool, bool),
    mut solve: impl FnMut(&SmoothingParams, P) -> (P, usize),
    check: impl Fn(&P) -> Attempt<A>,
) -> Option<A> {
    let mut params = ctx.config.smoothing;
    let mut x = x0;
    for esc in 0..=ctx.config.max_escalations {
        let (next, iters) = solve(&params, x);
        state.inner_iterations.push(iters);
        match check(&next) {
            Attempt::Accept(p) => {
                state.penalties = params;
                return Some(p);
            }
            Attempt::Violated(thresh, angle) => {
                if esc < ctx.config.max_escalations {
                    escalate(&mut params, thresh, angle);
                }
            }
        }
        x = next;
    }
    state.penalties = params;
    None
}

fn update_rotation(ctx: &Context, state: &mut SolutionState) -> bool {
    let model = RotationModel::new(&ctx.prop, &state.tx, &state.rx);
    let w = state.w.clone();
    let data = ctx.data(&w);
    let x0: Vec<Matrix3<f64>> = state.rotations.iter().map(|r| *r.matrix()).collect();
    let (tx, rx) = (state.tx.clone(), state.rx.clone());
    let result = penalty_loop(
        ctx,
        x0,
        state,
        |p, thresh, angle| {
            if thresh {
                p.lambda2 *= p.tau;
            }
            if angle {
                p.lambda1 *= p.tau;
            }
        },
        |params, x| {
            let res = rcg_minimize(
                &So3Product,
                |r| model.value(r, &data, params),
                |r| model.gradient(r, &data, params),
                x,
                &ctx.config.rcg,
            );
            (res.point, res.iterations)
        },
        |x| {
            let angle_violated = x.iter().any(|r| r[(2, 2)] < ctx.cos_max - ANGLE_SLACK);
            let repaired: Vec<RotationMatrix> =
                x.iter().map(|r| repair_rotation(r, ctx.cos_max)).collect();
            let h = ctx.channels(&repaired, &tx, &rx);
            let thresh_ok = ctx.meets_targets(&h, &w, ACCEPT_SLACK);
            if thresh_ok && angle_ok(&repaired, ctx.cos_max) {
                Attempt::Accept(repaired)
            } else {
                Attempt::Violated(!thresh_ok, angle_violated)
            }
        },
    );
    match result {
        Some(r) => {
            state.rotations = r;
            true
        }
        None => false,
    }
}

fn update_boresight(ctx: &Context, state: &mut SolutionState) -> bool {
    let model = BoresightModel::new(&ctx.prop, &state.tx, &state.rx);
    let w = state.w.clone();
    let data = ctx.data(&w);
    let x0: Vec<Vec3> = state.rotations.iter().map(|r| r.boresight()).collect();
    let (tx, rx) = (state.tx.clone(), state.rx.clone());
    let result = penalty_loop(
        ctx,
        x0,
        state,
        |p, thresh, angle| {
            if thresh {
                p.lambda2 *= p.tau;
            }
            if angle {
                p.lambda1 *= p.tau;
            }
        },
        |params, x| {
            let res = rcg_minimize(
                &RealSphereProduct,
                |b| model.value(b, &data, params),
                |b| model.gradient(b, &data, params),
                x,
                &ctx.config.rcg,
            );
            (res.point, res.iterations)
        },
        |x| {
            let angle_violated = x.iter().any(|b| b.z < ctx.cos_max - ANGLE_SLACK);
            let repaired: Vec<RotationMatrix> = x
                .iter()
                .map(|b| geodesic_from_ez(&repair_boresight(b, ctx.cos_max)))
                .collect();
            let h = ctx.channels(&repaired, &tx, &rx);
            let thresh_ok = ctx.meets_targets(&h, &w, ACCEPT_SLACK);
            if thresh_ok && angle_ok(&repaired, ctx.cos_max) {
                Attempt::Accept(repaired)
            } else {
                Attempt::Violated(!thresh_ok, angle_violated)
            }
        },
    );
    match result {
        Some(r) => {
            state.rotations = r;
            true
        }
        None => false,
    }
}

fn doubled(g: Vec<Vector2<C64>>) -> Vec<Vector2<C64>> {
    g.into_iter().map(|x| x * C64::from(2.0)).collect()
}

fn update_tx(ctx: &Context, state: &mut SolutionState) -> bool {
    let model = LinearTx::new(&ctx.prop, &state.rotations, &state.rx);
    let w = state.w.clone();
    let data = ctx.data(&w);
    let x0: Vec<Vector2<C64>> = state.tx.iter().map(|v| v.0).collect();
    let result = penalty_loop(
        ctx,
        x0,
        state,
        |p, _, _| p.lambda3 *= p.tau,
        |params, x| {
            let res = rcg_minimize(
                &ComplexSphereProduct,
                |v| model.value(v, &data, params),
                |v| doubled(model.gradient(v, &data, params)),
                x,
                &ctx.config.rcg,
            );
            (res.point, res.iterations)
        },
        |x| {
            if ctx.meets_targets(&model.channels(x), &w, ACCEPT_SLACK) {
                Attempt::Accept(x.clone())
            } else {
                Attempt::Violated(true, false)
            }
        },
    );
    match result {
        Some(v) => {
            state.tx = v.into_iter().map(PolStateTx).collect();
            true
        }
        None => false,
    }
}

fn update_rx(ctx: &Context, state: &mut SolutionState) -> bool {
    let model = LinearRx::new(&ctx.prop, &state.rotations, &state.tx);
    let w = state.w.clone();
    let data = ctx.data(&w);
    let x0: Vec<Vector2<C64>> = state.rx.iter().map(|u| u.0).collect();
    let result = penalty_loop(
        ctx,
        x0,
        state,
        |p, _, _| p.lambda4 *= p.tau,
        |params, x| {
            let res = rcg_minimize(
                &ComplexCircleProduct,
                |u| model.value(u, &data, params),
                |u| doubled(model.gradient(u, &data, params)),
                x,
                &ctx.config.rcg,
            );
            (res.point, res.iterations)
        },
        |x| {
            if ctx.meets_targets(&model.channels(x), &w, ACCEPT_SLACK) {
                Attempt::Accept(x.clone())
            } else {
                Attempt::Violated(true, false)
            }
        },
    );
    match result {
        Some(u) => {
            state.rx = u.into_iter().map(PolCombinerRx).collect();
            true
        }
        None => false,
    }
}
