//! Keyed sampling of the coupling graph: Erdős–Rényi or Watts–Strogatz
//! topology, then a uniform weight matrix masked by the adjacency and
//! row-normalized to the coupling strength.
//!
//! Draw order is part of the format: ER draws one unit uniform per unordered
//! pair `(i < j)` in row-major order; WS draws one uniform per lattice edge
//! `(i, i + j)`, `i` outer and `j` inner; weights draw one uniform per ordered
//! pair in row-major order, diagonal included.

use crate::error::{Error, Result};
use crate::keystream::KeyedStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GraphFamily {
    ErdosRenyi,
    WattsStrogatz,
}

impl GraphFamily {
    pub const ALL: [GraphFamily; 2] = [GraphFamily::ErdosRenyi, GraphFamily::WattsStrogatz];

    pub fn id(self) -> u8 {
        match self {
            GraphFamily::ErdosRenyi => 0,
            GraphFamily::WattsStrogatz => 1,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            GraphFamily::ErdosRenyi => "er",
            GraphFamily::WattsStrogatz => "ws",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "er" | "erdos-renyi" | "erdos_renyi" => Some(GraphFamily::ErdosRenyi),
            "ws" | "watts-strogatz" | "watts_strogatz" => Some(GraphFamily::WattsStrogatz),
            _ => None,
        }
    }
}

/// Family-specific topology parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Topology {
    ErdosRenyi { p: f64 },
    WattsStrogatz { k: usize, beta: f64 },
}

impl Topology {
    pub fn family(&self) -> GraphFamily {
        match self {
            Topology::ErdosRenyi { .. } => GraphFamily::ErdosRenyi,
            Topology::WattsStrogatz { .. } => GraphFamily::WattsStrogatz,
        }
    }
}

/// Resolved graph description.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphSpec {
    pub d: usize,
    pub topology: Topology,
    pub eps_c: f64,
}

impl GraphSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidDimension("graph needs at least one node".into()));
        }
        match self.topology {
            Topology::ErdosRenyi { p } => check_probability("p", p)?,
            Topology::WattsStrogatz { k, beta } => {
                check_ws(self.d, k)?;
                check_probability("beta", beta)?;
            }
        }
        check_coupling(self.eps_c)
    }

    /// Sample adjacency then weights from one stream.
    pub fn sample(&self, stream: &mut KeyedStream) -> Result<(Adjacency, WeightMatrix)> {
        self.validate()?;
        let adjacency = match self.topology {
            Topology::ErdosRenyi { p } => sample_er(self.d, p, stream)?,
            Topology::WattsStrogatz { k, beta } => sample_ws(self.d, k, beta, stream)?,
        };
        let weights = sample_weights(&adjacency, self.eps_c, stream)?;
        Ok((adjacency, weights))
    }
}

fn check_probability(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::InvalidGraphSpec(format!(
            "{name} must lie in [0, 1], got {v}"
        )));
    }
    Ok(())
}

fn check_ws(d: usize, k: usize) -> Result<()> {
    if !k.is_multiple_of(2) || k < 2 || k >= d {
        return Err(Error::InvalidGraphSpec(format!(
            "lattice degree k must be even with 2 <= k < d, got k={k}, d={d}"
        )));
    }
    Ok(())
}

pub(crate) fn check_coupling(eps_c: f64) -> Result<()> {
    if !(eps_c > 0.0 && eps_c < 1.0) {
        return Err(Error::InvalidGraphSpec(format!(
            "coupling strength must lie in (0, 1), got {eps_c}"
        )));
    }
    Ok(())
}

/// Undirected simple graph as a dense boolean matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    d: usize,
    edges: Vec<bool>,
}

impl Adjacency {
    pub fn empty(d: usize) -> Self {
        Self {
            d,
            edges: vec![false; d * d],
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges[i * self.d + j]
    }

    fn set(&mut self, i: usize, j: usize, present: bool) {
        self.edges[i * self.d + j] = present;
        self.edges[j * self.d + i] = present;
    }

    pub fn degree(&self, i: usize) -> usize {
        self.edges[i * self.d..(i + 1) * self.d]
            .iter()
            .filter(|&&e| e)
            .count()
    }

    /// Number of `true` entries, i.e. twice the edge count.
    pub fn directed_entries(&self) -> usize {
        self.edges.iter().filter(|&&e| e).count()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.d).all(|i| (0..self.d).all(|j| self.has_edge(i, j) == self.has_edge(j, i)))
    }

    pub fn has_self_loops(&self) -> bool {
        (0..self.d).any(|i| self.has_edge(i, i))
    }

    /// `'0'`/`'1'` row strings, handy for fixtures.
    pub fn rows(&self) -> Vec<String> {
        (0..self.d)
            .map(|i| {
                (0..self.d)
                    .map(|j| if self.has_edge(i, j) { '1' } else { '0' })
                    .collect()
            })
            .collect()
    }
}

/// Dense `d x d` nonnegative coupling matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    d: usize,
    w: Vec<f64>,
}

impl WeightMatrix {
    pub fn zeros(d: usize) -> Self {
        Self {
            d,
            w: vec![0.0; d * d],
        }
    }

    /// Row-major values; `values.len()` must be `d * d`.
    pub fn from_rows(d: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != d * d {
            return Err(Error::InvalidDimension(format!(
                "weight matrix needs {} values, got {}",
                d * d,
                values.len()
            )));
        }
        Ok(Self { d, w: values })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.d + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.w[i * self.d..(i + 1) * self.d]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    /// Left-to-right sum of row `i`.
    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).iter().fold(0.0, |acc, &v| acc + v)
    }

    pub fn is_zero(&self) -> bool {
        self.w.iter().all(|&v| v == 0.0)
    }
}

/// Erdős–Rényi `G(d, p)`.
pub fn sample_er(d: usize, p: f64, stream: &mut KeyedStream) -> Result<Adjacency> {
    if d == 0 {
        return Err(Error::InvalidDimension("graph needs at least one node".into()));
    }
    check_probability("p", p)?;
    let mut a = Adjacency::empty(d);
    for i in 0..d {
        for j in i + 1..d {
            if stream.unit_uniform()? < p {
                a.set(i, j, true);
            }
        }
    }
    Ok(a)
}

/// Watts–Strogatz ring lattice with per-edge rewiring of the far endpoint.
pub fn sample_ws(d: usize, k: usize, beta: f64, stream: &mut KeyedStream) -> Result<Adjacency> {
    if d == 0 {
        return Err(Error::InvalidDimension("graph needs at least one node".into()));
    }
    check_ws(d, k)?;
    check_probability("beta", beta)?;
    let half = k / 2;
    let mut a = Adjacency::empty(d);
    for i in 0..d {
        for j in 1..=half {
            a.set(i, (i + j) % d, true);
        }
    }
    for i in 0..d {
        for j in 1..=half {
            let far = (i + j) % d;
            if stream.unit_uniform()? >= beta {
                continue;
            }
            // no free endpoint left for this node
            if a.degree(i) >= d - 1 {
                continue;
            }
            let target = loop {
                let t = stream.index(d as u64)? as usize;
                if t != i && !a.has_edge(i, t) {
                    break t;
                }
            };
            debug_assert!(a.has_edge(i, far));
            a.set(i, far, false);
            a.set(i, target, true);
        }
    }
    Ok(a)
}

/// `W = U ⊙ A`, then each nonzero row scaled to sum to `eps_c`.
///
/// After scaling, the rounding residual of the row sum (accumulated left to
/// right) is added to the row's largest entry, which keeps every row sum
/// within a few ulps of `eps_c`.
pub fn sample_weights(a: &Adjacency, eps_c: f64, stream: &mut KeyedStream) -> Result<WeightMatrix> {
    check_coupling(eps_c)?;
    let d = a.d();
    let mut w = WeightMatrix::zeros(d);
    for i in 0..d {
        for j in 0..d {
            let u = stream.unit_uniform()?;
            if a.has_edge(i, j) {
                w.w[i * d + j] = u;
            }
        }
    }
    for i in 0..d {
        let row = &mut w.w[i * d..(i + 1) * d];
        let total = row.iter().fold(0.0, |acc, &v| acc + v);
        if total <= 0.0 {
            continue;
        }
        let scale = eps_c / total;
        for v in row.iter_mut().filter(|v| **v != 0.0) {
            *v *= scale;
        }
        let scaled_total = row.iter().fold(0.0, |acc, &v| acc + v);
        let mut jmax = 0;
        for j in 0..d {
            if row[j] > row[jmax] {
                jmax = j;
            }
        }
        row[jmax] += eps_c - scaled_total;
    }
    Ok(w)
}
