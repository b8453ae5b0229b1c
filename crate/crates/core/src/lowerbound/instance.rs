//! The hard instance: encoded lattice points, the tube and ball regions
//! along the End-of-A-Line path, and the displacement field `G` with
//! `F(x) = x + G(x)`.
//!
//! Coordinates split into two blocks of length `2m`: `x_u = (Enc(u), 0)/√n`,
//! `x'_u = (0, Enc(u))/√n` and `x_(u,v) = (Enc(u), Enc(v))/√n`.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::gv::{build_gv_code, GvCode};
use super::oracle::{EndOfLineOracle, OracleMode};
use crate::error::{invalid, Result};
use crate::Vector;

pub const DEFAULT_EPS: f64 = 0.05;
pub const DEFAULT_GAMMA: f64 = 1.0 / 32.0;

/// A point counts as a solution when `‖G‖` is at most `eps` over this.
pub const SOLUTION_DIVISOR: f64 = 130.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LatticePoint {
    Vertex(u32),
    VertexPrime(u32),
    Edge(u32, u32),
}

/// Regions in increasing precedence; a point in several takes the last.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "region", rename_all = "snake_case")]
pub enum Region {
    Background,
    InitialTube,
    OriginBall,
    EdgeTube1 { u: u32, v: u32 },
    EdgeTube2 { u: u32, v: u32 },
    VertexTube { u: u32 },
    VertexBall1 { u: u32 },
    VertexBall2 { u: u32 },
    EdgeBall { u: u32, v: u32 },
}

/// Region type without its vertex labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionKind {
    Background,
    InitialTube,
    OriginBall,
    EdgeTube1,
    EdgeTube2,
    VertexTube,
    VertexBall1,
    VertexBall2,
    EdgeBall,
}

impl RegionKind {
    pub const ALL: [RegionKind; 9] = [
        RegionKind::Background,
        RegionKind::InitialTube,
        RegionKind::OriginBall,
        RegionKind::EdgeTube1,
        RegionKind::EdgeTube2,
        RegionKind::VertexTube,
        RegionKind::VertexBall1,
        RegionKind::VertexBall2,
        RegionKind::EdgeBall,
    ];

    pub fn is_ball(self) -> bool {
        matches!(self, RegionKind::VertexBall1 | RegionKind::VertexBall2 | RegionKind::EdgeBall)
    }
}

impl fmt::Display for RegionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit enum serializes");
        f.write_str(s.as_str().expect("string"))
    }
}

impl Region {
    pub fn kind(&self) -> RegionKind {
        match self {
            Region::Background => RegionKind::Background,
            Region::InitialTube => RegionKind::InitialTube,
            Region::OriginBall => RegionKind::OriginBall,
            Region::EdgeTube1 { .. } => RegionKind::EdgeTube1,
            Region::EdgeTube2 { .. } => RegionKind::EdgeTube2,
            Region::VertexTube { .. } => RegionKind::VertexTube,
            Region::VertexBall1 { .. } => RegionKind::VertexBall1,
            Region::VertexBall2 { .. } => RegionKind::VertexBall2,
            Region::EdgeBall { .. } => RegionKind::EdgeBall,
        }
    }
}

/// Instance descriptor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub k: usize,
    #[serde(default = "default_mode")]
    pub mode: OracleMode,
    /// Orders the explicit line; unused by the adversary.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

fn default_mode() -> OracleMode {
    OracleMode::Adversarial
}
fn default_eps() -> f64 {
    DEFAULT_EPS
}
fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}

impl InstanceSpec {
    pub fn new(k: usize, mode: OracleMode, seed: u64) -> Self {
        InstanceSpec { k, mode, seed, eps: DEFAULT_EPS, gamma: DEFAULT_GAMMA }
    }

    /// A fresh oracle for this descriptor. Explicit mode draws a line through
    /// all `2^k` vertices.
    pub fn oracle(&self) -> Result<EndOfLineOracle> {
        match self.mode {
            OracleMode::Adversarial => EndOfLineOracle::adversarial(self.k),
            OracleMode::Explicit => EndOfLineOracle::random_path(self.k, 1 << self.k, self.seed),
        }
    }

    pub fn build(&self) -> Result<HardInstance> {
        let code = Arc::new(build_gv_code(self.k)?);
        HardInstance::new(code, self.oracle()?, self.eps, self.gamma)
    }
}

/// Segment traversed from `start` to `end`.
#[derive(Clone, Debug)]
struct Segment {
    start: Vector,
    end: Vector,
}

impl Segment {
    fn dist(&self, x: &Vector) -> f64 {
        let d = &self.end - &self.start;
        let t = ((x - &self.start).dot(&d) / d.norm_sq()).clamp(0.0, 1.0);
        let mut foot = self.start.clone();
        foot.axpy(t, &d);
        (x - &foot).norm()
    }

    fn direction(&self) -> Vector {
        (&self.end - &self.start).normalized().expect("segments have distinct ends")
    }
}

/// Where the displacement at a point comes from.
#[derive(Clone, Debug)]
enum Shape {
    Tube(Segment),
    Origin,
    /// Ball at `center` joining the incoming and outgoing tubes.
    Ball { center: Vector, incoming: Segment, outgoing: Segment },
}

#[derive(Clone, Debug)]
struct Located {
    region: Region,
    shape: Shape,
}

/// Displacement at a point with the region it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub region: Region,
    pub displacement: Vector,
    /// Whether the ball's turning construction applied.
    pub turning: bool,
    /// `F(x) = x + G(x)`, pulled back radially onto the sphere if outside.
    pub image: Vector,
    pub clamped: bool,
}

/// Hard instance over a code and an oracle.
#[derive(Debug)]
pub struct HardInstance {
    code: Arc<GvCode>,
    oracle: EndOfLineOracle,
    eps: f64,
    gamma: f64,
    alpha: f64,
    /// One-bit positions of each codeword.
    ones: Vec<Vec<usize>>,
    inv_sqrt_n: f64,
}

impl HardInstance {
    pub fn new(code: Arc<GvCode>, oracle: EndOfLineOracle, eps: f64, gamma: f64) -> Result<Self> {
        if code.k() != oracle.k() {
            return Err(invalid("code and oracle disagree on k"));
        }
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(invalid(format!("eps must lie in (0, 1], got {eps}")));
        }
        if !(gamma > 0.0 && gamma <= 1.0 / 16.0) {
            return Err(invalid(format!("gamma must lie in (0, 1/16], got {gamma}")));
        }
        let ones = (0..code.len() as u32).map(|u| code.ones(u)).collect::<Result<Vec<_>>>()?;
        let n = 4 * code.m();
        Ok(HardInstance {
            code,
            oracle,
            eps,
            gamma,
            alpha: 3f64.sqrt() * gamma,
            ones,
            inv_sqrt_n: 1.0 / (n as f64).sqrt(),
        })
    }

    pub fn k(&self) -> usize {
        self.code.k()
    }

    /// Ambient dimension `40k`.
    pub fn dim(&self) -> usize {
        4 * self.code.m()
    }

    fn m(&self) -> usize {
        self.code.m()
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Radius of the vertex and edge balls, `√3 γ`.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn code(&self) -> &GvCode {
        &self.code
    }

    pub fn oracle(&self) -> &EndOfLineOracle {
        &self.oracle
    }

    pub fn solution_threshold(&self) -> f64 {
        self.eps / SOLUTION_DIVISOR
    }

    fn check_vertex(&self, u: u32) -> Result<()> {
        if u as usize >= self.code.len() {
            return Err(invalid(format!("vertex {u} out of range for k = {}", self.k())));
        }
        Ok(())
    }

    /// Writes `Enc(u)/√n` into `block` (length `2m`).
    fn write_enc(&self, u: u32, block: &mut [f64]) {
        let m = self.m();
        for v in block[..m].iter_mut() {
            *v = 0.0;
        }
        for v in block[m..].iter_mut() {
            *v = self.inv_sqrt_n;
        }
        for &i in &self.ones[u as usize] {
            block[i] = self.inv_sqrt_n;
            block[m + i] = 0.0;
        }
    }

    pub fn lattice_point(&self, which: LatticePoint) -> Result<Vector> {
        let n = self.dim();
        let half = n / 2;
        let mut x = vec![0.0; n];
        match which {
            LatticePoint::Vertex(u) => {
                self.check_vertex(u)?;
                self.write_enc(u, &mut x[..half]);
            }
            LatticePoint::VertexPrime(u) => {
                self.check_vertex(u)?;
                self.write_enc(u, &mut x[half..]);
            }
            LatticePoint::Edge(u, v) => {
                self.check_vertex(u)?;
                self.check_vertex(v)?;
                self.write_enc(u, &mut x[..half]);
                self.write_enc(v, &mut x[half..]);
            }
        }
        Ok(Vector::from_vec(x))
    }

    fn point(&self, which: LatticePoint) -> Vector {
        self.lattice_point(which).expect("vertices come from the code")
    }

    /// Vertex whose encoding best matches `block`, with `‖block − Enc(u)/√n‖`.
    fn decode(&self, block: &[f64]) -> (u32, f64) {
        let m = self.m();
        let base: f64 = block[m..].iter().sum();
        let delta: Vec<f64> = (0..m).map(|i| block[i] - block[m + i]).collect();
        let mut best = (0u32, f64::NEG_INFINITY);
        for (u, ones) in self.ones.iter().enumerate() {
            let score = base + ones.iter().map(|&i| delta[i]).sum::<f64>();
            if score > best.1 {
                best = (u as u32, score);
            }
        }
        let sq: f64 = block.iter().map(|v| v * v).sum();
        let dist_sq = sq - 2.0 * best.1 * self.inv_sqrt_n + 0.25;
        (best.0, dist_sq.max(0.0).sqrt())
    }

    fn has_vertex_tube(&self, u: u32) -> Result<bool> {
        Ok(u == 0 || self.oracle.predecessor(u)? != u)
    }

    fn origin_segment(&self) -> Segment {
        Segment { start: Vector::zeros(self.dim()), end: self.point(LatticePoint::VertexPrime(0)) }
    }

    fn vertex_segment(&self, u: u32) -> Segment {
        Segment {
            start: self.point(LatticePoint::VertexPrime(u)),
            end: self.point(LatticePoint::Vertex(u)),
        }
    }

    fn edge1_segment(&self, u: u32, v: u32) -> Segment {
        Segment { start: self.point(LatticePoint::Vertex(u)), end: self.point(LatticePoint::Edge(u, v)) }
    }

    fn edge2_segment(&self, u: u32, v: u32) -> Segment {
        Segment {
            start: self.point(LatticePoint::Edge(u, v)),
            end: self.point(LatticePoint::VertexPrime(v)),
        }
    }

    /// Tube into `x'_u`: from the origin for `u = 0`, else from the edge point.
    fn incoming_to_prime(&self, u: u32) -> Result<Option<Segment>> {
        if u == 0 {
            return Ok(Some(self.origin_segment()));
        }
        let p = self.oracle.predecessor(u)?;
        Ok((p != u).then(|| self.edge2_segment(p, u)))
    }

    /// Every region containing `x`. Oracle queries are made only for
    /// vertices whose lattice geometry lies within `α` of `x`.
    fn locate(&self, x: &Vector) -> Result<Vec<Located>> {
        let n = self.dim();
        if x.len() != n {
            return Err(invalid(format!("point has dimension {}, instance has {n}", x.len())));
        }
        let (g, alpha) = (self.gamma, self.alpha);
        let half = n / 2;
        let xs = x.as_slice();
        let mut found = Vec::new();

        if x.norm() <= g {
            found.push(Located { region: Region::OriginBall, shape: Shape::Origin });
        }
        let l0 = self.origin_segment();
        if l0.dist(x) <= g {
            found.push(Located { region: Region::InitialTube, shape: Shape::Tube(l0) });
        }

        let (ua, da) = self.decode(&xs[..half]);
        if da <= alpha {
            let v = self.oracle.successor(ua)?;
            if v != ua {
                let t1 = self.edge1_segment(ua, v);
                if t1.dist(x) <= g {
                    found.push(Located { region: Region::EdgeTube1 { u: ua, v }, shape: Shape::Tube(t1.clone()) });
                }
                let c = self.point(LatticePoint::Edge(ua, v));
                if (x - &c).norm() <= alpha {
                    found.push(Located {
                        region: Region::EdgeBall { u: ua, v },
                        shape: Shape::Ball { center: c, incoming: t1.clone(), outgoing: self.edge2_segment(ua, v) },
                    });
                }
                let c = self.point(LatticePoint::Vertex(ua));
                if (x - &c).norm() <= alpha && self.has_vertex_tube(ua)? {
                    found.push(Located {
                        region: Region::VertexBall1 { u: ua },
                        shape: Shape::Ball { center: c, incoming: self.vertex_segment(ua), outgoing: t1 },
                    });
                }
            }
        }

        let (ub, db) = self.decode(&xs[half..]);
        if db <= alpha {
            if ub != 0 {
                let p = self.oracle.predecessor(ub)?;
                if p != ub {
                    let t2 = self.edge2_segment(p, ub);
                    if t2.dist(x) <= g {
                        found.push(Located { region: Region::EdgeTube2 { u: p, v: ub }, shape: Shape::Tube(t2) });
                    }
                }
            }
            let c = self.point(LatticePoint::VertexPrime(ub));
            if (x - &c).norm() <= alpha {
                if let Some(incoming) = self.incoming_to_prime(ub)? {
                    found.push(Located {
                        region: Region::VertexBall2 { u: ub },
                        shape: Shape::Ball { center: c, incoming, outgoing: self.vertex_segment(ub) },
                    });
                }
            }
        }

        let sum: Vec<f64> = (0..half).map(|i| xs[i] + xs[half + i]).collect();
        let (uab, _) = self.decode(&sum);
        let t3 = self.vertex_segment(uab);
        let d3 = t3.dist(x);
        if d3 <= g && self.has_vertex_tube(uab)? {
            found.push(Located { region: Region::VertexTube { u: uab }, shape: Shape::Tube(t3) });
        }
        Ok(found)
    }

    pub fn classify_region(&self, x: &Vector) -> Result<Region> {
        Ok(pick(&self.locate(x)?, false).map_or(Region::Background, |l| l.region))
    }

    /// `G(x)` and `F(x)` with the region they came from.
    pub fn evaluate(&self, x: &Vector) -> Result<Evaluation> {
        let xn = x.norm();
        if xn > 1.0 + 1e-12 {
            return Err(crate::Error::Domain { norm: xn });
        }
        let found = self.locate(x)?;
        let top = pick(&found, false);
        let region = top.map_or(Region::Background, |l| l.region);
        let mut turning = false;
        let g = match top.map(|l| &l.shape) {
            None => self.background(x),
            Some(Shape::Tube(seg)) => self.tube(x, seg),
            Some(Shape::Origin) => self.origin_ball(x),
            Some(Shape::Ball { center, incoming, outgoing }) => match self.turn(x, center, incoming, outgoing) {
                Some(g) => {
                    turning = true;
                    g
                }
                // Outside the turning region the ball behaves like the tubes
                // and background around it.
                None => match pick(&found, true).map(|l| &l.shape) {
                    Some(Shape::Tube(seg)) => self.tube(x, seg),
                    Some(Shape::Origin) => self.origin_ball(x),
                    _ => self.background(x),
                },
            },
        };
        let mut image = x + &g;
        let norm = image.norm();
        let clamped = norm > 1.0;
        if clamped {
            image = image.scaled(1.0 / norm);
        }
        Ok(Evaluation { region, displacement: g, turning, image, clamped })
    }

    pub fn displacement(&self, x: &Vector) -> Result<Vector> {
        Ok(self.evaluate(x)?.displacement)
    }

    /// `F(x) = x + G(x)`, clamped to the unit ball.
    pub fn map(&self, x: &Vector) -> Result<Vector> {
        Ok(self.evaluate(x)?.image)
    }

    /// `−ε x/‖x‖`.
    fn background(&self, x: &Vector) -> Vector {
        match x.normalized() {
            Some(u) => u.scaled(-self.eps),
            None => Vector::zeros(x.len()),
        }
    }

    /// `ε (μ (−x/‖x‖) + (1 − μ) d)` with `μ` the distance to the centre
    /// line over `γ` and `d` the unit direction of travel.
    fn tube(&self, x: &Vector, seg: &Segment) -> Vector {
        let mu = (seg.dist(x) / self.gamma).min(1.0);
        self.blend(x, mu, &seg.direction())
    }

    fn blend(&self, x: &Vector, mu: f64, dir: &Vector) -> Vector {
        let mut g = dir.scaled((1.0 - mu) * self.eps);
        if let Some(u) = x.normalized() {
            g.axpy(-mu * self.eps, &u);
        }
        g
    }

    /// The initial tube's field on the half facing `x'_0`; on the other half
    /// the blend weight is `‖x‖/γ`.
    fn origin_ball(&self, x: &Vector) -> Vector {
        let dir = self.point(LatticePoint::VertexPrime(0));
        if x.dot(&dir) >= 0.0 {
            return self.tube(x, &self.origin_segment());
        }
        self.blend(x, (x.norm() / self.gamma).min(1.0), &dir.scaled(2.0))
    }

    /// Turning construction of a ball at `c`: an arc around `y`, the point at
    /// distance `α` from `c` on the bisector of the two arms, joins the feet
    /// `z₁` (outgoing arm) and `z₃` (incoming arm). A point at angle `ρ` from
    /// `z₁ − y` is pushed along the arc's tangent `σ(ρ)`, blended toward the
    /// background by its distance to the arc point `τ(ρ)`. `None` outside
    /// `0 ≤ ρ ≤ θ, μ ≤ 1`.
    fn turn(&self, x: &Vector, c: &Vector, incoming: &Segment, outgoing: &Segment) -> Option<Vector> {
        let a_in = (&incoming.start - c).normalized()?;
        let a_out = (&outgoing.end - c).normalized()?;
        let bis = (&a_in + &a_out).normalized()?;
        let mut y = c.clone();
        y.axpy(self.alpha, &bis);
        let yc = &y - c;
        let mut z1 = c.clone();
        z1.axpy(yc.dot(&a_out), &a_out);
        let mut z3 = c.clone();
        z3.axpy(yc.dot(&a_in), &a_in);
        let r1 = &z1 - &y;
        let radius = r1.norm();
        let e1 = r1.normalized()?;
        let r3 = &z3 - &y;
        let mut e2 = r3.clone();
        e2.axpy(-r3.dot(&e1), &e1);
        let e2 = e2.normalized()?;
        let theta = r3.dot(&e2).atan2(r3.dot(&e1));
        let w = x - &y;
        let rho = w.dot(&e2).atan2(w.dot(&e1));
        if !(0.0..=theta).contains(&rho) {
            return None;
        }
        let (s, co) = rho.sin_cos();
        let mut tau = y.clone();
        tau.axpy(radius * co, &e1);
        tau.axpy(radius * s, &e2);
        let mu = (x - &tau).norm() / self.gamma;
        if mu > 1.0 {
            return None;
        }
        let (p1, p2) = (a_out.dot(&e1), a_out.dot(&e2));
        let mut sigma = e1.scaled(p1 * co - p2 * s);
        sigma.axpy(p1 * s + p2 * co, &e2);
        Some(self.blend(x, mu, &sigma))
    }
}

/// Attempts a region sampler makes before giving up.
const SAMPLE_ATTEMPTS: usize = 256;

impl HardInstance {
    /// Random point classified as `kind`, or `None` if no attempt landed
    /// there. A random structure of that kind is picked (through oracle
    /// queries), then a point on its centre line or centre plus a random
    /// perpendicular offset of radius uniform in `[0, γ]` (`[0, α]` for
    /// balls). Points claimed by a higher-precedence region are rejected.
    pub fn sample_region(&self, kind: RegionKind, rng: &mut impl Rng) -> Result<Option<Vector>> {
        for _ in 0..SAMPLE_ATTEMPTS {
            let Some(x) = self.propose(kind, rng)? else { continue };
            if x.norm() <= 1.0 && self.classify_region(&x)?.kind() == kind {
                return Ok(Some(x));
            }
        }
        Ok(None)
    }

    fn propose(&self, kind: RegionKind, rng: &mut impl Rng) -> Result<Option<Vector>> {
        let u = rng.random_range(0..self.code.len() as u32);
        let (g, a) = (self.gamma, self.alpha);
        let tube = |seg: Segment, rng: &mut dyn rand::RngCore| {
            let mut x = seg.start.clone();
            x.axpy(rng.random::<f64>(), &(&seg.end - &seg.start));
            let off = perpendicular(&seg.direction(), rng);
            x.axpy(rng.random::<f64>() * g, &off);
            Some(x)
        };
        let ball = |c: Vector, r: f64, rng: &mut dyn rand::RngCore| {
            let mut x = c;
            x.axpy(rng.random::<f64>() * r, &random_unit(x.len(), rng));
            Some(x)
        };
        let x = match kind {
            RegionKind::Background => Some(crate::validation::uniform_ball_point(rng, self.dim())),
            RegionKind::InitialTube => tube(self.origin_segment(), rng),
            RegionKind::OriginBall => ball(Vector::zeros(self.dim()), g, rng),
            RegionKind::EdgeTube1 => {
                let v = self.oracle.successor(u)?;
                if v == u { None } else { tube(self.edge1_segment(u, v), rng) }
            }
            RegionKind::EdgeTube2 => {
                let p = self.oracle.predecessor(u)?;
                if p == u { None } else { tube(self.edge2_segment(p, u), rng) }
            }
            RegionKind::VertexTube => {
                if self.has_vertex_tube(u)? { tube(self.vertex_segment(u), rng) } else { None }
            }
            RegionKind::VertexBall1 => {
                if self.oracle.successor(u)? != u && self.has_vertex_tube(u)? {
                    ball(self.point(LatticePoint::Vertex(u)), a, rng)
                } else {
                    None
                }
            }
            RegionKind::VertexBall2 => {
                if self.incoming_to_prime(u)?.is_some() {
                    ball(self.point(LatticePoint::VertexPrime(u)), a, rng)
                } else {
                    None
                }
            }
            RegionKind::EdgeBall => {
                let v = self.oracle.successor(u)?;
                if v == u { None } else { ball(self.point(LatticePoint::Edge(u, v)), a, rng) }
            }
        };
        Ok(x)
    }
}

fn random_unit(n: usize, rng: &mut dyn rand::RngCore) -> Vector {
    loop {
        let g = Vector::from_vec((0..n).map(|_| rng.sample(StandardNormal)).collect());
        if let Some(u) = g.normalized() {
            return u;
        }
    }
}

/// Random unit vector orthogonal to the unit vector `d`.
fn perpendicular(d: &Vector, rng: &mut dyn rand::RngCore) -> Vector {
    loop {
        let mut g = random_unit(d.len(), rng);
        g.axpy(-g.dot(d), d);
        if let Some(u) = g.normalized() {
            return u;
        }
    }
}

/// Highest-precedence entry, optionally skipping balls.
fn pick(found: &[Located], skip_balls: bool) -> Option<&Located> {
    found
        .iter()
        .filter(|l| !(skip_balls && l.region.kind().is_ball()))
        .max_by_key(|l| l.region.kind())
}
