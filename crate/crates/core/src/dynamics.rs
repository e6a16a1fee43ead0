//! Node-level chaotic maps, diffusive coupling over the weight matrix, keyed
//! noise injection and trajectory simulation.
//!
//! Each node carries the full state of its map (one component for logistic
//! and tent, two for baker, standard and cat). Coupling and noise act
//! componentwise; after noise the state is folded back into the map's domain
//! (`[0, 1)`, or `[0, 2π)` for the standard map). Only component 0 feeds the
//! mask.

use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::graphgen::{GraphSpec, WeightMatrix};
use crate::keystream::KeyedStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MapKind {
    Logistic,
    Tent,
    Baker,
    Standard,
    ArnoldCat,
}

impl MapKind {
    /// Selection order used when the map is drawn from the params stream.
    pub const ALL: [MapKind; 5] = [
        MapKind::Logistic,
        MapKind::Tent,
        MapKind::Baker,
        MapKind::Standard,
        MapKind::ArnoldCat,
    ];

    pub fn id(self) -> u8 {
        match self {
            MapKind::Logistic => 0,
            MapKind::Tent => 1,
            MapKind::Baker => 2,
            MapKind::Standard => 3,
            MapKind::ArnoldCat => 4,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            MapKind::Logistic => "logistic",
            MapKind::Tent => "tent",
            MapKind::Baker => "baker",
            MapKind::Standard => "standard",
            MapKind::ArnoldCat => "cat",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "logistic" => Some(MapKind::Logistic),
            "tent" => Some(MapKind::Tent),
            "baker" => Some(MapKind::Baker),
            "standard" => Some(MapKind::Standard),
            "cat" | "arnold" | "arnoldcat" | "arnold-cat" => Some(MapKind::ArnoldCat),
            _ => None,
        }
    }

    /// State components per node.
    pub fn dim(self) -> usize {
        match self {
            MapKind::Logistic | MapKind::Tent => 1,
            MapKind::Baker | MapKind::Standard | MapKind::ArnoldCat => 2,
        }
    }

    /// Length of the periodic domain each component lives in.
    pub fn period(self) -> f64 {
        match self {
            MapKind::Standard => TAU,
            _ => 1.0,
        }
    }
}

/// Accepted range of the active parameter for each map; `None` for the cat
/// map, which has no free parameter.
pub fn param_range(kind: MapKind) -> Option<(f64, f64)> {
    match kind {
        MapKind::Logistic => Some((3.9, 4.0)),
        MapKind::Tent => Some((0.4, 0.6)),
        MapKind::Baker => Some((0.3, 0.7)),
        MapKind::Standard => Some((1.0, 5.0)),
        MapKind::ArnoldCat => None,
    }
}

/// Range keyed configurations draw the parameter from. Narrower than
/// [`param_range`] for the standard map: on coupled graphs, kicks below about
/// 2.2 sit in mixed phase space and kicks above about 4.4 near accelerator
/// modes, and both ends produce configurations with a non-positive largest
/// Lyapunov exponent.
pub fn auto_range(kind: MapKind) -> Option<(f64, f64)> {
    match kind {
        MapKind::Standard => Some((2.5, 4.2)),
        _ => param_range(kind),
    }
}

/// Map parameters. Only the field of the active map is meaningful; the others
/// stay zero.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MapParams {
    /// logistic growth rate
    pub r: f64,
    /// tent break point
    pub mu: f64,
    /// baker fold point
    pub s: f64,
    /// standard-map kick strength
    pub kick: f64,
}

impl MapParams {
    /// Parameters with `value` in the slot used by `kind`.
    pub fn for_map(kind: MapKind, value: f64) -> Self {
        let mut p = Self::default();
        match kind {
            MapKind::Logistic => p.r = value,
            MapKind::Tent => p.mu = value,
            MapKind::Baker => p.s = value,
            MapKind::Standard => p.kick = value,
            MapKind::ArnoldCat => {}
        }
        p
    }

    /// Value of the active parameter, if the map has one.
    pub fn active(&self, kind: MapKind) -> Option<f64> {
        match kind {
            MapKind::Logistic => Some(self.r),
            MapKind::Tent => Some(self.mu),
            MapKind::Baker => Some(self.s),
            MapKind::Standard => Some(self.kick),
            MapKind::ArnoldCat => None,
        }
    }

    pub fn validate(&self, kind: MapKind) -> Result<()> {
        if let (Some((lo, hi)), Some(v)) = (param_range(kind), self.active(kind)) {
            if !(lo..=hi).contains(&v) {
                return Err(Error::InvalidMapParams(format!(
                    "{} parameter must lie in [{lo}, {hi}], got {v}",
                    kind.name()
                )));
            }
        }
        Ok(())
    }
}

/// Reduce `v` into `[0, period)`.
#[inline]
pub fn fold(v: f64, period: f64) -> f64 {
    let r = v.rem_euclid(period);
    // rem_euclid of a tiny negative value rounds up to `period`
    if r >= period || r == 0.0 {
        0.0
    } else {
        r
    }
}

fn check_domain(kind: MapKind, state: &[f64]) -> Result<()> {
    let period = kind.period();
    for &v in state {
        if !(v.is_finite() && (0.0..period).contains(&v)) {
            return Err(Error::DomainViolation {
                map: kind.name(),
                value: v,
            });
        }
    }
    Ok(())
}

/// Apply one step of the node-level map in place. `state.len()` must equal
/// `kind.dim()` and every component must lie in the map's domain.
pub fn map_step(kind: MapKind, params: &MapParams, state: &mut [f64]) -> Result<()> {
    if state.len() != kind.dim() {
        return Err(Error::InvalidDimension(format!(
            "{} map state has {} components, got {}",
            kind.name(),
            kind.dim(),
            state.len()
        )));
    }
    check_domain(kind, state)?;
    match kind {
        MapKind::Logistic => {
            let x = state[0];
            state[0] = params.r * x * (1.0 - x);
        }
        MapKind::Tent => {
            let x = state[0];
            let mu = params.mu;
            state[0] = if x < mu { x / mu } else { (1.0 - x) / (1.0 - mu) };
        }
        MapKind::Baker => {
            // stretch x by 1/s or 1/(1-s), stack y into [0,s) or [s,1)
            let (x, y) = (state[0], state[1]);
            let s = params.s;
            if x < s {
                state[0] = x / s;
                state[1] = s * y;
            } else {
                state[0] = (x - s) / (1.0 - s);
                state[1] = (1.0 - s) * y + s;
            }
        }
        MapKind::Standard => {
            let (theta, p) = (state[0], state[1]);
            let p_next = fold(p + params.kick * libm::sin(theta), TAU);
            state[0] = fold(theta + p_next, TAU);
            state[1] = p_next;
        }
        MapKind::ArnoldCat => {
            let (x, y) = (state[0], state[1]);
            state[0] = fold(x + y, 1.0);
            state[1] = fold(x + 2.0 * y, 1.0);
        }
    }
    Ok(())
}

/// `d x m` node states, node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMatrix {
    d: usize,
    m: usize,
    data: Vec<f64>,
}

impl StateMatrix {
    pub fn new(d: usize, m: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != d * m {
            return Err(Error::InvalidDimension(format!(
                "state matrix {d}x{m} needs {} values, got {}",
                d * m,
                data.len()
            )));
        }
        Ok(Self { d, m, data })
    }

    pub fn zeros(d: usize, m: usize) -> Self {
        Self {
            d,
            m,
            data: vec![0.0; d * m],
        }
    }

    pub fn nodes(&self) -> usize {
        self.d
    }

    pub fn components(&self) -> usize {
        self.m
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.data[i * self.m..(i + 1) * self.m]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }
}

/// Fully resolved chaotic system, minus the key-derived samples (weights and
/// initial state).
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub graph: GraphSpec,
    pub map: MapKind,
    pub params: MapParams,
    pub t_burn: u32,
    pub noise_sigma: f64,
    pub alpha: f64,
}

impl SystemConfig {
    pub fn d(&self) -> usize {
        self.graph.d
    }

    pub fn validate(&self) -> Result<()> {
        self.graph.validate()?;
        self.params.validate(self.map)?;
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "noise amplitude must be finite and >= 0, got {}",
                self.noise_sigma
            )));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::InvalidInput(format!(
                "mask amplitude must be finite and > 0, got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Eq.-4 style diffusion of already-mapped states: for each node and
/// component, `y_i + Σ_j W_ij (y_j - y_i)`, no noise and no folding.
pub fn diffuse(mapped: &StateMatrix, w: &WeightMatrix) -> Result<StateMatrix> {
    let coupling = SparseCoupling::new(w);
    if w.d() != mapped.d {
        return Err(Error::InvalidDimension(format!(
            "weights are {0}x{0} but there are {1} nodes",
            w.d(),
            mapped.d
        )));
    }
    let mut out = StateMatrix::zeros(mapped.d, mapped.m);
    for i in 0..mapped.d {
        for c in 0..mapped.m {
            out.data[i * mapped.m + c] = coupling.combine(&mapped.data, mapped.m, i, c);
        }
    }
    Ok(out)
}

/// One coupled update: map every node, diffuse over `w`, add `noise` (same
/// layout as `states`) and fold back into the domain. `step` only labels
/// divergence errors.
pub fn coupled_step(
    states: &StateMatrix,
    w: &WeightMatrix,
    kind: MapKind,
    params: &MapParams,
    noise: Option<&[f64]>,
    step: usize,
) -> Result<StateMatrix> {
    let mut stepper = Stepper::new(kind, *params, w, states.d)?;
    let mut next = states.clone();
    stepper.step(&mut next.data, noise, step)?;
    Ok(next)
}

/// Nonzero weights in row order.
#[derive(Debug, Clone)]
struct SparseCoupling {
    offsets: Vec<usize>,
    entries: Vec<(usize, f64)>,
}

impl SparseCoupling {
    fn new(w: &WeightMatrix) -> Self {
        let d = w.d();
        let mut offsets = Vec::with_capacity(d + 1);
        let mut entries = Vec::new();
        offsets.push(0);
        for i in 0..d {
            for (j, &v) in w.row(i).iter().enumerate() {
                if v != 0.0 {
                    entries.push((j, v));
                }
            }
            offsets.push(entries.len());
        }
        Self { offsets, entries }
    }

    // Evaluated as if in twice the working precision: every difference,
    // product and partial sum is split into its rounded value and exact error
    // (no fused multiply-add, so results are bit-identical across targets),
    // and the errors are folded in once at the end. Skipped zero weights
    // contribute exact zeros.
    #[inline]
    fn combine(&self, y: &[f64], m: usize, i: usize, c: usize) -> f64 {
        let yi = y[i * m + c];
        let mut sum = yi;
        let mut err = 0.0;
        for &(j, wij) in &self.entries[self.offsets[i]..self.offsets[i + 1]] {
            let (diff, diff_err) = two_sum(y[j * m + c], -yi);
            let (prod, prod_err) = two_prod(wij, diff);
            let (s, e) = two_sum(sum, prod);
            sum = s;
            err += e + prod_err + wij * diff_err;
        }
        sum + err
    }
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn split(a: f64) -> (f64, f64) {
    let c = 134_217_729.0 * a;
    let hi = c - (c - a);
    (hi, a - hi)
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let (ah, al) = split(a);
    let (bh, bl) = split(b);
    (p, ((ah * bh - p) + ah * bl + al * bh) + al * bl)
}

/// Reusable coupled-update kernel for long trajectories.
#[derive(Debug, Clone)]
pub struct Stepper {
    kind: MapKind,
    params: MapParams,
    d: usize,
    coupling: SparseCoupling,
    mapped: Vec<f64>,
}

impl Stepper {
    pub fn new(kind: MapKind, params: MapParams, w: &WeightMatrix, d: usize) -> Result<Self> {
        if w.d() != d {
            return Err(Error::InvalidDimension(format!(
                "weights are {0}x{0} but there are {d} nodes",
                w.d()
            )));
        }
        Ok(Self {
            kind,
            params,
            d,
            coupling: SparseCoupling::new(w),
            mapped: vec![0.0; d * kind.dim()],
        })
    }

    pub fn kind(&self) -> MapKind {
        self.kind
    }

    /// Advance `state` (node-major, `d * m` values) by one step.
    pub fn step(&mut self, state: &mut [f64], noise: Option<&[f64]>, step: usize) -> Result<()> {
        let m = self.kind.dim();
        let len = self.d * m;
        if state.len() != len || noise.is_some_and(|n| n.len() != len) {
            return Err(Error::InvalidDimension(format!(
                "expected {len} state and noise values"
            )));
        }
        self.mapped.copy_from_slice(state);
        for node in self.mapped.chunks_exact_mut(m) {
            map_step(self.kind, &self.params, node)?;
        }
        let period = self.kind.period();
        for i in 0..self.d {
            for c in 0..m {
                let mut v = self.coupling.combine(&self.mapped, m, i, c);
                if let Some(n) = noise {
                    v += n[i * m + c];
                }
                if !v.is_finite() {
                    return Err(Error::NumericalDivergence { node: i, step });
                }
                state[i * m + c] = fold(v, period);
            }
        }
        Ok(())
    }
}

/// Lower edge and width of the initial-state interval for unit-domain maps.
const INIT_LO: f64 = 0.05;
const INIT_WIDTH: f64 = 0.9;

/// Initial node states: `[0.05, 0.95)` for unit-domain maps, `[0, 2π)` for the
/// standard map, drawn node-major, component-minor.
pub fn init_state(cfg: &SystemConfig, stream: &mut KeyedStream) -> Result<StateMatrix> {
    let d = cfg.d();
    let m = cfg.map.dim();
    let mut data = Vec::with_capacity(d * m);
    for _ in 0..d * m {
        let v = match cfg.map {
            MapKind::Standard => fold(stream.uniform(0.0, TAU)?, TAU),
            _ => INIT_LO + INIT_WIDTH * stream.unit_uniform()?,
        };
        data.push(v);
    }
    StateMatrix::new(d, m, data)
}

/// Mask value of a component: normalize to `[0, 1)`, keep it at least 2^-53
/// from either end so the result stays strictly inside `(-alpha, alpha)`,
/// then map affinely.
#[inline]
pub fn mask_value(component: f64, period: f64, alpha: f64) -> f64 {
    const EDGE: f64 = f64::EPSILON / 2.0;
    let u = (component / period).clamp(EDGE, 1.0 - EDGE);
    alpha * (2.0 * u - 1.0)
}

/// Run `t_burn` discarded steps and then `rows` retained steps, emitting one
/// mask row of `d` values per retained step (row-major `rows x d`).
///
/// Noise is uniform in `[-σ, σ]`, drawn per step, node-major and
/// component-minor. With `σ = 0` the noise stream is not touched.
pub fn simulate(
    cfg: &SystemConfig,
    w: &WeightMatrix,
    x0: &StateMatrix,
    noise_stream: &mut KeyedStream,
    rows: usize,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let d = cfg.d();
    let m = cfg.map.dim();
    if rows == 0 {
        return Err(Error::InvalidDimension("need at least one mask row".into()));
    }
    if x0.nodes() != d || x0.components() != m {
        return Err(Error::InvalidDimension(format!(
            "initial state is {}x{}, system needs {d}x{m}",
            x0.nodes(),
            x0.components()
        )));
    }
    let mut stepper = Stepper::new(cfg.map, cfg.params, w, d)?;
    let mut state = x0.as_slice().to_vec();
    let mut noise = vec![0.0; d * m];
    let sigma = cfg.noise_sigma;
    let period = cfg.map.period();
    let burn = cfg.t_burn as usize;
    let mut out = Vec::with_capacity(rows * d);
    for t in 0..burn + rows {
        let injected = if sigma > 0.0 {
            for v in noise.iter_mut() {
                *v = noise_stream.uniform(-sigma, sigma)?;
            }
            Some(noise.as_slice())
        } else {
            None
        };
        stepper.step(&mut state, injected, t + 1)?;
        if t >= burn {
            out.extend(
                state
                    .chunks_exact(m)
                    .map(|node| mask_value(node[0], period, cfg.alpha)),
            );
        }
    }
    Ok(out)
}
