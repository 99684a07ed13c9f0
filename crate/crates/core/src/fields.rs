//! Structured 1-D/2-D grids, node-centred fields, difference operators,
//! trapezoidal quadrature, boundary partitions and incremental actions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A side of the rectangular body.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub fn all(dim: usize) -> &'static [Side] {
        if dim == 1 {
            &[Side::Left, Side::Right]
        } else {
            &[Side::Left, Side::Right, Side::Bottom, Side::Top]
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
            Side::Bottom => "bottom",
            Side::Top => "top",
        }
    }
}

/// Structured node-centred grid on `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    n: Vec<usize>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    h: Vec<f64>,
}

/// One trapezoidal quadrature point. Points sit on element vertices; the
/// gradient at a point is the element's one-sided difference along each axis.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadPoint {
    pub node: usize,
    pub weight: f64,
    /// `(node, coefficient per axis)`; the gradient of a nodal field `f` is
    /// `Σ coef[k] · f[node]`.
    pub stencil: Vec<(usize, [f64; 2])>,
}

/// Boundary nodes of one side with trapezoidal weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SideNodes {
    pub side: Side,
    pub normal: [f64; 2],
    pub nodes: Vec<(usize, f64)>,
}

impl Grid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, n: Vec<usize>) -> Result<Self> {
        let dim = n.len();
        if !(1..=2).contains(&dim) || lo.len() != dim || hi.len() != dim {
            return Err(Error::UnsupportedDimension(dim));
        }
        if let Some(&bad) = n.iter().find(|&&k| k < 3) {
            return Err(Error::GridTooSmall(bad));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(b > a)) {
            return Err(Error::InvalidArgument("grid extents must satisfy hi > lo".into()));
        }
        let h = (0..dim).map(|k| (hi[k] - lo[k]) / (n[k] - 1) as f64).collect();
        Ok(Self { dim, n, lo, hi, h })
    }

    pub fn uniform_1d(length: f64, n: usize) -> Result<Self> {
        Self::new(vec![0.0], vec![length], vec![n])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> &[usize] {
        &self.n
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn min_spacing(&self) -> f64 {
        self.h.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn measure(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    pub fn num_nodes(&self) -> usize {
        self.n.iter().product()
    }

    /// Node id from axis indices (x fastest).
    pub fn node(&self, ij: &[usize]) -> usize {
        if self.dim == 1 {
            ij[0]
        } else {
            ij[0] + self.n[0] * ij[1]
        }
    }

    pub fn indices(&self, node: usize) -> [usize; 2] {
        if self.dim == 1 {
            [node, 0]
        } else {
            [node % self.n[0], node / self.n[0]]
        }
    }

    pub fn coords(&self, node: usize) -> Vec<f64> {
        let ij = self.indices(node);
        (0..self.dim).map(|k| self.lo[k] + ij[k] as f64 * self.h[k]).collect()
    }

    /// Largest node-id distance between nodes sharing an element.
    pub fn node_bandwidth(&self) -> usize {
        if self.dim == 1 {
            1
        } else {
            self.n[0] + 1
        }
    }

    /// Trapezoidal weight of each node.
    pub fn node_weights(&self) -> Vec<f64> {
        (0..self.num_nodes())
            .map(|node| {
                let ij = self.indices(node);
                (0..self.dim)
                    .map(|k| {
                        let end = ij[k] == 0 || ij[k] == self.n[k] - 1;
                        if end {
                            0.5 * self.h[k]
                        } else {
                            self.h[k]
                        }
                    })
                    .product()
            })
            .collect()
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        let ij = self.indices(node);
        (0..self.dim).any(|k| ij[k] == 0 || ij[k] == self.n[k] - 1)
    }

    pub fn side_nodes(&self, side: Side) -> SideNodes {
        let (axis, at_hi, normal) = match side {
            Side::Left => (0, false, [-1.0, 0.0]),
            Side::Right => (0, true, [1.0, 0.0]),
            Side::Bottom => (1, false, [0.0, -1.0]),
            Side::Top => (1, true, [0.0, 1.0]),
        };
        let fixed = if at_hi { self.n[axis] - 1 } else { 0 };
        let nodes = if self.dim == 1 {
            vec![(fixed, 1.0)]
        } else {
            let other = 1 - axis;
            let m = self.n[other];
            (0..m)
                .map(|t| {
                    let mut ij = [0; 2];
                    ij[axis] = fixed;
                    ij[other] = t;
                    let w = if t == 0 || t == m - 1 {
                        0.5 * self.h[other]
                    } else {
                        self.h[other]
                    };
                    (self.node(&ij), w)
                })
                .collect()
        };
        SideNodes { side, normal, nodes }
    }

    pub fn sides(&self) -> Vec<SideNodes> {
        Side::all(self.dim).iter().map(|&s| self.side_nodes(s)).collect()
    }

    /// Element-vertex quadrature points covering the whole body.
    pub fn quadrature(&self) -> Vec<QuadPoint> {
        let mut pts = Vec::new();
        if self.dim == 1 {
            let h = self.h[0];
            for e in 0..self.n[0] - 1 {
                let stencil = vec![(e, [-1.0 / h, 0.0]), (e + 1, [1.0 / h, 0.0])];
                for node in [e, e + 1] {
                    pts.push(QuadPoint {
                        node,
                        weight: 0.5 * h,
                        stencil: stencil.clone(),
                    });
                }
            }
        } else {
            let (hx, hy) = (self.h[0], self.h[1]);
            for j in 0..self.n[1] - 1 {
                for i in 0..self.n[0] - 1 {
                    for b in 0..2 {
                        for a in 0..2 {
                            let here = self.node(&[i + a, j + b]);
                            let xnb = self.node(&[i + 1 - a, j + b]);
                            let ynb = self.node(&[i + a, j + 1 - b]);
                            let sx = if a == 0 { 1.0 } else { -1.0 };
                            let sy = if b == 0 { 1.0 } else { -1.0 };
                            pts.push(QuadPoint {
                                node: here,
                                weight: 0.25 * hx * hy,
                                stencil: vec![
                                    (here, [-sx / hx, -sy / hy]),
                                    (xnb, [sx / hx, 0.0]),
                                    (ynb, [0.0, sy / hy]),
                                ],
                            });
                        }
                    }
                }
            }
        }
        pts
    }
}

/// Node-centred field with `ncomp` components per node (node-major storage).
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    ncomp: usize,
    data: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: &Grid, ncomp: usize) -> Self {
        Self {
            ncomp,
            data: vec![0.0; grid.num_nodes() * ncomp],
        }
    }

    pub fn from_fn(grid: &Grid, ncomp: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        let mut data = Vec::with_capacity(grid.num_nodes() * ncomp);
        for node in 0..grid.num_nodes() {
            let v = f(&grid.coords(node));
            assert_eq!(v.len(), ncomp);
            data.extend(v);
        }
        Self { ncomp, data }
    }

    pub fn from_data(ncomp: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len() % ncomp, 0);
        Self { ncomp, data }
    }

    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    pub fn num_nodes(&self) -> usize {
        self.data.len() / self.ncomp
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, node: usize, c: usize) -> f64 {
        self.data[node * self.ncomp + c]
    }

    #[inline]
    pub fn set(&mut self, node: usize, c: usize, v: f64) {
        self.data[node * self.ncomp + c] = v;
    }

    pub fn node_values(&self, node: usize) -> &[f64] {
        &self.data[node * self.ncomp..(node + 1) * self.ncomp]
    }

    pub fn component(&self, c: usize) -> Field {
        Field {
            ncomp: 1,
            data: self.data.iter().skip(c).step_by(self.ncomp).copied().collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |a, b| a.max(b.abs()))
    }

    pub fn axpy(&mut self, a: f64, x: &Field) {
        assert_eq!(self.data.len(), x.data.len());
        for (y, xi) in self.data.iter_mut().zip(&x.data) {
            *y += a * xi;
        }
    }

    pub fn scaled(&self, a: f64) -> Field {
        Field {
            ncomp: self.ncomp,
            data: self.data.iter().map(|v| a * v).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Field) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |a, (x, y)| a.max((x - y).abs()))
    }
}

fn axis_derivative(grid: &Grid, f: &Field, c: usize, axis: usize, node: usize) -> f64 {
    let ij = grid.indices(node);
    let n = grid.n()[axis];
    let h = grid.h()[axis];
    let at = |k: usize| {
        let mut q = ij;
        q[axis] = k;
        f.at(grid.node(&q[..grid.dim()]), c)
    };
    let i = ij[axis];
    if i == 0 {
        (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h)
    } else if i == n - 1 {
        (3.0 * at(n - 1) - 4.0 * at(n - 2) + at(n - 3)) / (2.0 * h)
    } else {
        (at(i + 1) - at(i - 1)) / (2.0 * h)
    }
}

/// Second-order gradient; output component `c * dim + k` is `∂f_c/∂X_k`.
pub fn gradient(grid: &Grid, f: &Field) -> Result<Field> {
    check_grid(grid)?;
    let d = grid.dim();
    let mut out = Field::zeros(grid, f.ncomp() * d);
    for node in 0..grid.num_nodes() {
        for c in 0..f.ncomp() {
            for k in 0..d {
                out.set(node, c * d + k, axis_derivative(grid, f, c, k, node));
            }
        }
    }
    Ok(out)
}

/// Second-order divergence over the leading index: input component
/// `k * m + c` is `T_{kc}`, output component `c` is `∂_k T_{kc}`.
pub fn divergence(grid: &Grid, f: &Field) -> Result<Field> {
    check_grid(grid)?;
    let d = grid.dim();
    if f.ncomp() % d != 0 {
        return Err(Error::DimensionMismatch(format!(
            "divergence needs a multiple of {d} components, got {}",
            f.ncomp()
        )));
    }
    let m = f.ncomp() / d;
    let mut out = Field::zeros(grid, m);
    for node in 0..grid.num_nodes() {
        for c in 0..m {
            let v = (0..d).map(|k| axis_derivative(grid, f, k * m + c, k, node)).sum();
            out.set(node, c, v);
        }
    }
    Ok(out)
}

fn check_grid(grid: &Grid) -> Result<()> {
    match grid.n().iter().find(|&&k| k < 3) {
        Some(&k) => Err(Error::GridTooSmall(k)),
        None => Ok(()),
    }
}

/// Trapezoidal volume integral of component `c`.
pub fn integrate_volume(grid: &Grid, f: &Field, c: usize) -> f64 {
    grid.node_weights()
        .iter()
        .enumerate()
        .map(|(node, w)| w * f.at(node, c))
        .sum()
}

/// Trapezoidal surface integral of `integrand(node, outward normal)` over the
/// selected sides.
pub fn integrate_surface(
    grid: &Grid,
    sides: &[Side],
    integrand: impl Fn(usize, &[f64]) -> f64,
) -> f64 {
    sides
        .iter()
        .map(|&s| {
            let sn = grid.side_nodes(s);
            sn.nodes
                .iter()
                .map(|&(node, w)| w * integrand(node, &sn.normal[..grid.dim()]))
                .sum::<f64>()
        })
        .sum()
}

/// Which incremental field a partition or boundary datum refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Mechanical,
    Electric,
    Thermal,
}

/// Split of the boundary into an essential part and a natural part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidePartition {
    pub essential: Vec<Side>,
    pub natural: Vec<Side>,
}

impl SidePartition {
    pub fn all_essential(dim: usize) -> Self {
        Self {
            essential: Side::all(dim).to_vec(),
            natural: vec![],
        }
    }

    pub fn all_natural(dim: usize) -> Self {
        Self {
            essential: vec![],
            natural: Side::all(dim).to_vec(),
        }
    }

    /// Essential on `ess`, natural elsewhere.
    pub fn essential_on(dim: usize, ess: &[Side]) -> Self {
        Self {
            essential: ess.to_vec(),
            natural: Side::all(dim).iter().filter(|s| !ess.contains(s)).copied().collect(),
        }
    }

    /// Checks disjointness and coverage of the boundary.
    pub fn validate(&self, dim: usize) -> Result<()> {
        let all = Side::all(dim);
        for s in self.essential.iter().chain(&self.natural) {
            if !all.contains(s) {
                return Err(Error::PartitionMismatch(format!(
                    "side '{}' does not exist in {dim}-D",
                    s.name()
                )));
            }
        }
        if let Some(s) = self.essential.iter().find(|s| self.natural.contains(s)) {
            return Err(Error::PartitionMismatch(format!(
                "side '{}' is both essential and natural; the two parts must be disjoint",
                s.name()
            )));
        }
        if let Some(s) = all
            .iter()
            .find(|s| !self.essential.contains(s) && !self.natural.contains(s))
        {
            return Err(Error::PartitionMismatch(format!(
                "side '{}' is unlabelled; essential and natural parts must cover the boundary",
                s.name()
            )));
        }
        Ok(())
    }
}

/// The three boundary partitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partitions {
    pub mechanical: SidePartition,
    pub electric: SidePartition,
    pub thermal: SidePartition,
}

impl Partitions {
    pub fn uniform(p: SidePartition) -> Self {
        Self {
            mechanical: p.clone(),
            electric: p.clone(),
            thermal: p,
        }
    }

    pub fn get(&self, kind: FieldKind) -> &SidePartition {
        match kind {
            FieldKind::Mechanical => &self.mechanical,
            FieldKind::Electric => &self.electric,
            FieldKind::Thermal => &self.thermal,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        for k in [FieldKind::Mechanical, FieldKind::Electric, FieldKind::Thermal] {
            self.get(k).validate(dim)?;
        }
        Ok(())
    }

    /// Per-node flag: node lies on an essential side of `kind`'s partition.
    pub fn essential_nodes(&self, grid: &Grid, kind: FieldKind) -> Vec<bool> {
        let mut flags = vec![false; grid.num_nodes()];
        for &s in &self.get(kind).essential {
            for (node, _) in grid.side_nodes(s).nodes {
                flags[node] = true;
            }
        }
        flags
    }
}

/// Time signals from a closed set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Signal {
    Constant,
    /// 0 before `t0`, linear to 1 at `t1`, 1 afterwards.
    Ramp { t0: f64, t1: f64 },
    /// `sin(2π·freq·t + phase)`.
    Sine { freq: f64, phase: f64 },
    /// `exp(−((t − center)/width)²)`.
    GaussianPulse { center: f64, width: f64 },
}

impl Signal {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Signal::Constant => 1.0,
            Signal::Ramp { t0, t1 } => {
                if t <= t0 {
                    0.0
                } else if t >= t1 {
                    1.0
                } else {
                    (t - t0) / (t1 - t0)
                }
            }
            Signal::Sine { freq, phase } => (2.0 * std::f64::consts::PI * freq * t + phase).sin(),
            Signal::GaussianPulse { center, width } => {
                let s = (t - center) / width;
                (-s * s).exp()
            }
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            Signal::Constant => 0.0,
            Signal::Ramp { t0, t1 } => {
                if t > t0 && t < t1 {
                    1.0 / (t1 - t0)
                } else {
                    0.0
                }
            }
            Signal::Sine { freq, phase } => {
                let w = 2.0 * std::f64::consts::PI * freq;
                w * (w * t + phase).cos()
            }
            Signal::GaussianPulse { center, width } => {
                let s = (t - center) / width;
                -2.0 * s / width * (-s * s).exp()
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Signal::Constant => true,
            Signal::Ramp { t0, t1 } => t1 > t0,
            Signal::Sine { freq, phase } => freq.is_finite() && phase.is_finite(),
            Signal::GaussianPulse { center, width } => center.is_finite() && width > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid signal {self:?}")))
        }
    }
}

/// Spatial shape of a load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    Uniform,
    /// `exp(−|X − center|²/width²)`.
    Gaussian { center: Vec<f64>, width: f64 },
    /// `Π_k sin(π m_k (X_k − lo_k)/L_k)` on the grid box.
    SineMode { modes: Vec<u32> },
}

impl Profile {
    pub fn eval(&self, grid: &Grid, x: &[f64]) -> f64 {
        match self {
            Profile::Uniform => 1.0,
            Profile::Gaussian { center, width } => {
                let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                (-r2 / (width * width)).exp()
            }
            Profile::SineMode { modes } => modes
                .iter()
                .enumerate()
                .map(|(k, &m)| {
                    let len = grid.hi()[k] - grid.lo()[k];
                    (std::f64::consts::PI * m as f64 * (x[k] - grid.lo()[k]) / len).sin()
                })
                .product(),
        }
    }
}

/// `amplitude · profile(X) · signal(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Load {
    pub amplitude: Vec<f64>,
    pub profile: Profile,
    pub signal: Signal,
}

impl Load {
    pub fn eval(&self, grid: &Grid, x: &[f64], t: f64, out: &mut [f64]) {
        let s = self.profile.eval(grid, x) * self.signal.eval(t);
        for (o, a) in out.iter_mut().zip(&self.amplitude) {
            *o += a * s;
        }
    }

    pub fn eval_rate(&self, grid: &Grid, x: &[f64], t: f64, out: &mut [f64]) {
        let s = self.profile.eval(grid, x) * self.signal.derivative(t);
        for (o, a) in out.iter_mut().zip(&self.amplitude) {
            *o += a * s;
        }
    }
}

/// Kind of boundary datum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    /// Incremental displacement `ỹ¹` (essential, mechanical).
    Displacement,
    /// Traction `K̃¹` per unit reference area (natural, mechanical).
    Traction,
    /// Potential `φ̃¹` (essential, electric).
    Potential,
    /// Surface charge `Δ̃¹`, with `Δ¹_L N_L = −Δ̃¹` (natural, electric).
    Charge,
    /// Temperature `θ̃¹` (essential, thermal).
    Temperature,
    /// Normal heat flux `Q̃¹ = Q¹_L N_L` (natural, thermal).
    HeatFlux,
}

impl BoundaryKind {
    pub fn field(self) -> FieldKind {
        match self {
            Self::Displacement | Self::Traction => FieldKind::Mechanical,
            Self::Potential | Self::Charge => FieldKind::Electric,
            Self::Temperature | Self::HeatFlux => FieldKind::Thermal,
        }
    }

    pub fn is_essential(self) -> bool {
        matches!(self, Self::Displacement | Self::Potential | Self::Temperature)
    }

    pub fn components(self, dim: usize) -> usize {
        match self.field() {
            FieldKind::Mechanical => dim,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryLoad {
    pub side: Side,
    pub kind: BoundaryKind,
    #[serde(flatten)]
    pub load: Load,
}

/// Incremental body and surface action.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IncrementalAction {
    /// Body force per unit mass `f¹`.
    #[serde(default)]
    pub body_force: Vec<Load>,
    /// Free charge `ρ¹_E`.
    #[serde(default)]
    pub charge: Vec<Load>,
    /// Heat source per unit mass `γ¹`.
    #[serde(default)]
    pub heat_source: Vec<Load>,
    #[serde(default)]
    pub boundary: Vec<BoundaryLoad>,
}

impl IncrementalAction {
    pub fn is_empty(&self) -> bool {
        self.body_force.is_empty()
            && self.charge.is_empty()
            && self.heat_source.is_empty()
            && self.boundary.is_empty()
    }

    pub fn scaled(&self, a: f64) -> Self {
        let sc = |l: &Load| Load {
            amplitude: l.amplitude.iter().map(|x| a * x).collect(),
            ..l.clone()
        };
        Self {
            body_force: self.body_force.iter().map(sc).collect(),
            charge: self.charge.iter().map(sc).collect(),
            heat_source: self.heat_source.iter().map(sc).collect(),
            boundary: self
                .boundary
                .iter()
                .map(|b| BoundaryLoad {
                    load: sc(&b.load),
                    ..b.clone()
                })
                .collect(),
        }
    }

    /// Sum of two actions.
    pub fn combined(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.body_force.extend(other.body_force.iter().cloned());
        out.charge.extend(other.charge.iter().cloned());
        out.heat_source.extend(other.heat_source.iter().cloned());
        out.boundary.extend(other.boundary.iter().cloned());
        out
    }

    pub fn validate(&self, grid: &Grid, partitions: &Partitions) -> Result<()> {
        let d = grid.dim();
        for l in &self.body_force {
            check_load(l, d, "body_force")?;
        }
        for l in self.charge.iter().chain(&self.heat_source) {
            check_load(l, 1, "scalar body load")?;
        }
        for b in &self.boundary {
            check_load(&b.load, b.kind.components(d), "boundary load")?;
            if !Side::all(d).contains(&b.side) {
                return Err(Error::PartitionMismatch(format!(
                    "side '{}' does not exist in {d}-D",
                    b.side.name()
                )));
            }
            let part = partitions.get(b.kind.field());
            let on_essential = part.essential.contains(&b.side);
            if on_essential != b.kind.is_essential() {
                return Err(Error::PartitionMismatch(format!(
                    "{:?} datum on side '{}' which is {} for that field",
                    b.kind,
                    b.side.name(),
                    if on_essential { "essential" } else { "natural" }
                )));
            }
        }
        Ok(())
    }
}

fn check_load(l: &Load, ncomp: usize, what: &str) -> Result<()> {
    if l.amplitude.len() != ncomp {
        return Err(Error::DimensionMismatch(format!(
            "{what} amplitude needs {ncomp} components, got {}",
            l.amplitude.len()
        )));
    }
    l.signal.validate()
}

/// Nodal boundary data at one time.
///
/// `essential_*` hold prescribed values (NaN where the node is free);
/// `*_nodal` hold natural fluxes already multiplied by the trapezoidal
/// boundary weight.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryValues {
    pub essential_u: Field,
    pub essential_phi: Field,
    pub essential_theta: Field,
    pub traction_nodal: Field,
    pub charge_nodal: Field,
    pub heat_nodal: Field,
}

/// Evaluates the boundary data of `action` at time `t` (or its time
/// derivative when `rate` is set).
pub fn boundary_values(
    grid: &Grid,
    partitions: &Partitions,
    action: &IncrementalAction,
    t: f64,
    rate: bool,
) -> BoundaryValues {
    let d = grid.dim();
    let mut bv = BoundaryValues {
        essential_u: Field::from_data(d, vec![f64::NAN; grid.num_nodes() * d]),
        essential_phi: Field::from_data(1, vec![f64::NAN; grid.num_nodes()]),
        essential_theta: Field::from_data(1, vec![f64::NAN; grid.num_nodes()]),
        traction_nodal: Field::zeros(grid, d),
        charge_nodal: Field::zeros(grid, 1),
        heat_nodal: Field::zeros(grid, 1),
    };
    for kind in [FieldKind::Mechanical, FieldKind::Electric, FieldKind::Thermal] {
        let ncomp = if kind == FieldKind::Mechanical { d } else { 1 };
        let target = match kind {
            FieldKind::Mechanical => &mut bv.essential_u,
            FieldKind::Electric => &mut bv.essential_phi,
            FieldKind::Thermal => &mut bv.essential_theta,
        };
        for (node, ess) in partitions.essential_nodes(grid, kind).into_iter().enumerate() {
            if ess {
                for c in 0..ncomp {
                    target.set(node, c, 0.0);
                }
            }
        }
    }
    let ess_flags = [
        partitions.essential_nodes(grid, FieldKind::Mechanical),
        partitions.essential_nodes(grid, FieldKind::Electric),
        partitions.essential_nodes(grid, FieldKind::Thermal),
    ];
    // Essential data: the value on a node shared by two essential sides is
    // taken from the later datum in the list.
    let mut buf = vec![0.0; d];
    for b in &action.boundary {
        let sn = grid.side_nodes(b.side);
        let ncomp = b.kind.components(d);
        for &(node, w) in &sn.nodes {
            let x = grid.coords(node);
            buf[..ncomp].iter_mut().for_each(|v| *v = 0.0);
            if rate {
                b.load.eval_rate(grid, &x, t, &mut buf[..ncomp]);
            } else {
                b.load.eval(grid, &x, t, &mut buf[..ncomp]);
            }
            let fi = match b.kind.field() {
                FieldKind::Mechanical => 0,
                FieldKind::Electric => 1,
                FieldKind::Thermal => 2,
            };
            match b.kind {
                BoundaryKind::Displacement => {
                    for c in 0..d {
                        bv.essential_u.set(node, c, buf[c]);
                    }
                }
                BoundaryKind::Potential => bv.essential_phi.set(node, 0, buf[0]),
                BoundaryKind::Temperature => bv.essential_theta.set(node, 0, buf[0]),
                BoundaryKind::Traction | BoundaryKind::Charge | BoundaryKind::HeatFlux => {
                    if ess_flags[fi][node] {
                        continue;
                    }
                    let target = match b.kind {
                        BoundaryKind::Traction => &mut bv.traction_nodal,
                        BoundaryKind::Charge => &mut bv.charge_nodal,
                        _ => &mut bv.heat_nodal,
                    };
                    for c in 0..ncomp {
                        let cur = target.at(node, c);
                        target.set(node, c, cur + w * buf[c]);
                    }
                }
            }
        }
    }
    bv
}

/// Nodal values of a body load at time `t`, one row per node.
pub fn body_values(grid: &Grid, loads: &[Load], ncomp: usize, t: f64) -> Field {
    let mut f = Field::zeros(grid, ncomp);
    let mut buf = vec![0.0; ncomp];
    for node in 0..grid.num_nodes() {
        let x = grid.coords(node);
        buf.iter_mut().for_each(|v| *v = 0.0);
        for l in loads {
            l.eval(grid, &x, t, &mut buf);
        }
        for c in 0..ncomp {
            f.set(node, c, buf[c]);
        }
    }
    f
}

/// Writes the essential boundary values of `bv` into the nodal fields.
pub fn apply_essential(u: &mut Field, phi: &mut Field, theta: &mut Field, bv: &BoundaryValues) {
    for (dst, src) in [
        (u, &bv.essential_u),
        (phi, &bv.essential_phi),
        (theta, &bv.essential_theta),
    ] {
        for (d, s) in dst.data_mut().iter_mut().zip(src.data()) {
            if !s.is_nan() {
                *d = *s;
            }
        }
    }
}

pub const CSV_SCHEMA: &str = "# biasfield-fields v1";

/// Nodal CSV: schema line, header, then one row per node with coordinates
/// followed by every component of each named field.
pub fn fields_csv(grid: &Grid, columns: &[(&str, &Field)]) -> String {
    let axes = ["x", "y"];
    let mut head: Vec<String> = axes[..grid.dim()].iter().map(|s| s.to_string()).collect();
    for (name, f) in columns {
        if f.ncomp() == 1 {
            head.push(name.to_string());
        } else {
            head.extend((0..f.ncomp()).map(|c| format!("{name}{c}")));
        }
    }
    let mut out = format!("{CSV_SCHEMA}\n{}\n", head.join(","));
    for i in 0..grid.num_nodes() {
        let mut row: Vec<String> = grid.coords(i).iter().map(|x| format!("{x:e}")).collect();
        for (_, f) in columns {
            row.extend(f.node_values(i).iter().map(|v| format!("{v:e}")));
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid2(n: usize) -> Grid {
        Grid::new(vec![-1.0, 0.0], vec![1.0, 2.0], vec![n, n + 2]).unwrap()
    }

    #[test]
    fn gradient_of_affine_is_exact() {
        let g = grid2(6);
        let f = Field::from_fn(&g, 1, |x| vec![0.3 + 1.5 * x[0] - 2.0 * x[1]]);
        let gr = gradient(&g, &f).unwrap();
        for node in 0..g.num_nodes() {
            assert!((gr.at(node, 0) - 1.5).abs() < 1e-13);
            assert!((gr.at(node, 1) + 2.0).abs() < 1e-13);
        }
    }

    #[test]
    fn laplacian_of_quadratic_is_exact() {
        let g = grid2(7);
        let f = Field::from_fn(&g, 1, |x| vec![x[0] * x[0] + 3.0 * x[1] * x[1] - x[0] * x[1]]);
        let lap = divergence(&g, &gradient(&g, &f).unwrap()).unwrap();
        for node in 0..g.num_nodes() {
            assert!((lap.at(node, 0) - 8.0).abs() < 1e-11, "{}", lap.at(node, 0));
        }
    }

    #[test]
    fn gradient_order_under_refinement() {
        let k = 2.3;
        let err = |n: usize| {
            let g = Grid::uniform_1d(2.0, n).unwrap();
            let f = Field::from_fn(&g, 1, |x| vec![(k * x[0]).sin()]);
            let gr = gradient(&g, &f).unwrap();
            (0..g.num_nodes())
                .map(|i| (gr.at(i, 0) - k * (k * g.coords(i)[0]).cos()).abs())
                .fold(0.0, f64::max)
        };
        let errs: Vec<f64> = [21, 41, 81, 161].iter().map(|&n| err(n)).collect();
        for w in errs.windows(2) {
            assert!((w[0] / w[1]).log2() >= 1.9, "{errs:?}");
        }
    }

    #[test]
    fn rejects_tiny_grid() {
        assert_eq!(Grid::uniform_1d(1.0, 2), Err(Error::GridTooSmall(2)));
    }

    #[test]
    fn quadrature_basics() {
        let g = grid2(5);
        let one = Field::from_fn(&g, 1, |_| vec![1.0]);
        assert!((integrate_volume(&g, &one, 0) - 4.0).abs() < 1e-14);
        let odd = Field::from_fn(&g, 1, |x| vec![x[0].powi(3) * (1.0 + x[1])]);
        assert!(integrate_volume(&g, &odd, 0).abs() < 1e-14);
        let qsum: f64 = g.quadrature().iter().map(|q| q.weight).sum();
        assert!((qsum - 4.0).abs() < 1e-14);
        let perim = integrate_surface(&g, Side::all(2), |_, _| 1.0);
        assert!((perim - 8.0).abs() < 1e-14);
    }

    #[test]
    fn discrete_divergence_theorem_converges() {
        let field = |x: &[f64]| vec![(x[0] * 1.3).sin() * x[1], (x[1]).cos() + x[0] * x[0] * x[1]];
        let defect = |n: usize| {
            let g = grid2(n);
            let f = Field::from_fn(&g, 2, field);
            let div = divergence(&g, &f).unwrap();
            let vol = integrate_volume(&g, &div, 0);
            let surf = integrate_surface(&g, Side::all(2), |node, nrm| {
                f.at(node, 0) * nrm[0] + f.at(node, 1) * nrm[1]
            });
            (vol - surf).abs()
        };
        let d: Vec<f64> = [9, 17, 33, 65].iter().map(|&n| defect(n)).collect();
        for w in d.windows(2) {
            assert!((w[0] / w[1]).log2() >= 1.9, "{d:?}");
        }
    }

    #[test]
    fn quadrature_gradients_exact_on_bilinear() {
        let g = grid2(4);
        let f = Field::from_fn(&g, 1, |x| vec![2.0 * x[0] - x[1] + 0.5]);
        for q in g.quadrature() {
            let mut gr = [0.0; 2];
            for (node, c) in &q.stencil {
                gr[0] += c[0] * f.at(*node, 0);
                gr[1] += c[1] * f.at(*node, 0);
            }
            assert!((gr[0] - 2.0).abs() < 1e-13 && (gr[1] + 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn partition_axioms() {
        let p = SidePartition {
            essential: vec![Side::Left],
            natural: vec![Side::Left, Side::Right],
        };
        assert!(matches!(p.validate(1), Err(Error::PartitionMismatch(m)) if m.contains("disjoint")));
        let p = SidePartition {
            essential: vec![Side::Left],
            natural: vec![],
        };
        assert!(p.validate(1).is_err());
        assert!(SidePartition::essential_on(2, &[Side::Top]).validate(2).is_ok());
        let p = SidePartition::essential_on(1, &[Side::Top]);
        assert!(p.validate(1).is_err());
    }

    #[test]
    fn homogeneous_essential_data_zeroes_boundary() {
        let g = grid2(4);
        let parts = Partitions::uniform(SidePartition::all_essential(2));
        let bv = boundary_values(&g, &parts, &IncrementalAction::default(), 0.3, false);
        let mut u = Field::from_fn(&g, 2, |_| vec![1.0, 1.0]);
        let mut phi = Field::from_fn(&g, 1, |_| vec![1.0]);
        let mut th = phi.clone();
        apply_essential(&mut u, &mut phi, &mut th, &bv);
        for node in 0..g.num_nodes() {
            let expect = if g.is_boundary(node) { 0.0 } else { 1.0 };
            assert_eq!(u.at(node, 1), expect);
            assert_eq!(phi.at(node, 0), expect);
            assert_eq!(th.at(node, 0), expect);
        }
    }

    #[test]
    fn action_partition_mismatch() {
        let g = Grid::uniform_1d(1.0, 5).unwrap();
        let parts = Partitions::uniform(SidePartition::essential_on(1, &[Side::Left]));
        let a = IncrementalAction {
            boundary: vec![BoundaryLoad {
                side: Side::Left,
                kind: BoundaryKind::Traction,
                load: Load {
                    amplitude: vec![1.0],
                    profile: Profile::Uniform,
                    signal: Signal::Constant,
                },
            }],
            ..Default::default()
        };
        assert!(matches!(a.validate(&g, &parts), Err(Error::PartitionMismatch(_))));
    }

    #[test]
    fn signal_derivatives_match_differences() {
        let sigs = [
            Signal::Ramp { t0: 0.1, t1: 0.9 },
            Signal::Sine { freq: 1.3, phase: 0.2 },
            Signal::GaussianPulse { center: 0.4, width: 0.2 },
        ];
        for s in sigs {
            let t = 0.37;
            let h = 1e-6;
            let fd = (s.eval(t + h) - s.eval(t - h)) / (2.0 * h);
            assert!((fd - s.derivative(t)).abs() < 1e-7);
        }
    }

    #[test]
    fn csv_layout() {
        let g = Grid::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![3, 3]).unwrap();
        let u = Field::from_fn(&g, 2, |x| vec![x[0], x[1]]);
        let t = Field::from_fn(&g, 1, |x| vec![x[0] + 10.0]);
        let csv = fields_csv(&g, &[("u", &u), ("theta", &t)]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_SCHEMA);
        assert_eq!(lines[1], "x,y,u0,u1,theta");
        assert_eq!(lines.len(), 2 + 9);
        let row: Vec<f64> = lines[2 + 5].split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(row, vec![1.0, 0.5, 1.0, 0.5, 11.0]);
    }
}
