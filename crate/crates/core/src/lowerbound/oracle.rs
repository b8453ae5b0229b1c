//! End-of-A-Line successor/predecessor oracles over `{0,1}^k`, identified
//! with `0..2^k`.
//!
//! Conventions: `S(x) = x` means `x` has no successor and `P(x) = x` means it
//! has no predecessor; `P(0) = 0` always. A vertex `x ≠ 0` is a solution when
//! `P(S(x)) ≠ x` or `S(P(x)) ≠ x`.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QueryKind {
    S,
    P,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub kind: QueryKind,
    pub vertex: u32,
    pub answer: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleMode {
    Explicit,
    Adversarial,
}

/// Lazy adversary state: every edge committed so far, plus self-loops.
#[derive(Clone, Debug, Default)]
struct AdversaryState {
    succ: BTreeMap<u32, u32>,
    pred: BTreeMap<u32, u32>,
    /// Lowest candidate for the next "untouched" answer; everything below it
    /// is touched, and touched vertices never become untouched again.
    cursor: u32,
}

impl AdversaryState {
    fn touched(&self, v: u32) -> bool {
        v == 0 || self.succ.contains_key(&v) || self.pred.contains_key(&v)
    }

    /// End of the path discovered from 0.
    fn central_end(&self) -> u32 {
        let mut v = 0;
        while let Some(&w) = self.succ.get(&v) {
            if w == v {
                break;
            }
            v = w;
        }
        v
    }

    fn successor(&mut self, x: u32, size: u32) -> u32 {
        if let Some(&w) = self.succ.get(&x) {
            return w;
        }
        while self.cursor < size && self.touched(self.cursor) {
            self.cursor += 1;
        }
        let mut w = self.cursor;
        if w == x {
            w += 1;
            while w < size && self.touched(w) {
                w += 1;
            }
        }
        if w >= size {
            // Nothing untouched is left: join x to the lowest open chain head,
            // or make x a sink (isolated if it has no predecessor either).
            let head = (1..size).find(|&h| h != x && self.touched(h) && !self.pred.contains_key(&h));
            let Some(h) = head else {
                self.succ.insert(x, x);
                if !self.pred.contains_key(&x) && x != 0 {
                    self.pred.insert(x, x);
                }
                return x;
            };
            w = h;
        }
        self.succ.insert(x, w);
        self.pred.insert(w, x);
        w
    }

    fn predecessor(&mut self, x: u32, size: u32) -> u32 {
        if x == 0 {
            return 0;
        }
        if let Some(&v) = self.pred.get(&x) {
            return v;
        }
        if self.succ.get(&x) == Some(&x) {
            self.pred.insert(x, x);
            return x;
        }
        let mut v = self.central_end();
        if self.succ.get(&v) == Some(&v) {
            // The path from 0 is finished, which happens only once every
            // vertex is named: attach x after the lowest open chain tail.
            let tail = (0..size).find(|&t| t != x && self.touched(t) && !self.succ.contains_key(&t));
            let Some(t) = tail else {
                self.pred.insert(x, x);
                return x;
            };
            v = t;
        }
        self.succ.insert(v, x);
        self.pred.insert(x, v);
        v
    }
}

#[derive(Debug)]
enum Backend {
    Explicit { s: Vec<u32>, p: Vec<u32> },
    Adversarial(AdversaryState),
}

#[derive(Debug)]
struct Inner {
    backend: Backend,
    log: Vec<QueryRecord>,
}

/// Successor/predecessor oracle with a query log. Queries are serialized.
#[derive(Debug)]
pub struct EndOfLineOracle {
    k: usize,
    inner: Mutex<Inner>,
}

impl EndOfLineOracle {
    fn check_k(k: usize) -> Result<()> {
        if k == 0 || k > 24 {
            return Err(invalid(format!("k must lie in 1..=24, got {k}")));
        }
        Ok(())
    }

    /// Lazy adversary: a fresh `P(x)` answers the end of the path from 0 and
    /// appends `x` to it; a fresh `S(x)` answers the lowest vertex other than
    /// 0 and `x` with no known edge. Repeated queries replay.
    pub fn adversarial(k: usize) -> Result<Self> {
        Self::check_k(k)?;
        Ok(Self::with_backend(k, Backend::Adversarial(AdversaryState::default())))
    }

    /// A single line `path[0] → path[1] → …`; `path[0]` must be 0. Vertices
    /// off the line are isolated.
    pub fn explicit_path(k: usize, path: &[u32]) -> Result<Self> {
        Self::check_k(k)?;
        let size = 1u32 << k;
        if path.first() != Some(&0) {
            return Err(invalid("path must start at vertex 0"));
        }
        let mut seen = BTreeSet::new();
        for &v in path {
            if v >= size || !seen.insert(v) {
                return Err(invalid(format!("path vertex {v} is out of range or repeated")));
            }
        }
        let mut s: Vec<u32> = (0..size).collect();
        let mut p = s.clone();
        for w in path.windows(2) {
            s[w[0] as usize] = w[1];
            p[w[1] as usize] = w[0];
        }
        Ok(Self::with_backend(k, Backend::Explicit { s, p }))
    }

    /// Line from 0 through `len` vertices in total, the others drawn in a
    /// seeded random order.
    pub fn random_path(k: usize, len: usize, seed: u64) -> Result<Self> {
        Self::check_k(k)?;
        let size = 1usize << k;
        if len == 0 || len > size {
            return Err(invalid(format!("path length must lie in 1..={size}, got {len}")));
        }
        let mut rest: Vec<u32> = (1..size as u32).collect();
        rest.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
        let mut path = vec![0];
        path.extend_from_slice(&rest[..len - 1]);
        Self::explicit_path(k, &path)
    }

    fn with_backend(k: usize, backend: Backend) -> Self {
        EndOfLineOracle { k, inner: Mutex::new(Inner { backend, log: Vec::new() }) }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn size(&self) -> u32 {
        1 << self.k
    }

    pub fn mode(&self) -> OracleMode {
        match self.inner.lock().expect("oracle lock").backend {
            Backend::Explicit { .. } => OracleMode::Explicit,
            Backend::Adversarial(_) => OracleMode::Adversarial,
        }
    }

    fn check_vertex(&self, x: u32) -> Result<()> {
        if x >= self.size() {
            return Err(invalid(format!("vertex {x} out of range for k = {}", self.k)));
        }
        Ok(())
    }

    pub fn query(&self, kind: QueryKind, x: u32) -> Result<u32> {
        self.check_vertex(x)?;
        let size = self.size();
        let mut inner = self.inner.lock().expect("oracle lock");
        let answer = match (&mut inner.backend, kind) {
            (Backend::Explicit { s, .. }, QueryKind::S) => s[x as usize],
            (Backend::Explicit { p, .. }, QueryKind::P) => p[x as usize],
            (Backend::Adversarial(st), QueryKind::S) => st.successor(x, size),
            (Backend::Adversarial(st), QueryKind::P) => st.predecessor(x, size),
        };
        inner.log.push(QueryRecord { kind, vertex: x, answer });
        Ok(answer)
    }

    pub fn successor(&self, x: u32) -> Result<u32> {
        self.query(QueryKind::S, x)
    }

    pub fn predecessor(&self, x: u32) -> Result<u32> {
        self.query(QueryKind::P, x)
    }

    pub fn log(&self) -> Vec<QueryRecord> {
        self.inner.lock().expect("oracle lock").log.clone()
    }

    pub fn query_count(&self) -> u64 {
        self.inner.lock().expect("oracle lock").log.len() as u64
    }

    /// Distinct vertices queried so far.
    pub fn touched(&self) -> usize {
        let inner = self.inner.lock().expect("oracle lock");
        inner.log.iter().map(|q| q.vertex).collect::<BTreeSet<_>>().len()
    }

    /// The true end of the line from 0, in explicit mode.
    pub fn line_end(&self) -> Option<u32> {
        match &self.inner.lock().expect("oracle lock").backend {
            Backend::Explicit { s, .. } => {
                let mut v = 0u32;
                while s[v as usize] != v {
                    v = s[v as usize];
                }
                Some(v)
            }
            Backend::Adversarial(_) => None,
        }
    }
}

/// Vertices whose status as a solution follows from the answers in `log`
/// alone: `x ≠ 0` with `P(S(x))` or `S(P(x))` answered and different from
/// `x`, or 0 when `P(S(0))` and `S(P(0))` are answered and both equal 0 or
/// both differ from it.
pub fn certified_solutions(log: &[QueryRecord]) -> Vec<u32> {
    let mut s = BTreeMap::new();
    let mut p = BTreeMap::new();
    for q in log {
        match q.kind {
            QueryKind::S => s.insert(q.vertex, q.answer),
            QueryKind::P => p.insert(q.vertex, q.answer),
        };
    }
    let mut out = BTreeSet::new();
    for (&x, &y) in &s {
        if x != 0 && p.get(&y).is_some_and(|&z| z != x) {
            out.insert(x);
        }
    }
    for (&x, &y) in &p {
        if x != 0 && s.get(&y).is_some_and(|&z| z != x) {
            out.insert(x);
        }
    }
    if let (Some(&s0), Some(&p0)) = (s.get(&0), p.get(&0)) {
        if let (Some(&ps0), Some(&sp0)) = (p.get(&s0), s.get(&p0)) {
            if (ps0 == 0) == (sp0 == 0) {
                out.insert(0);
            }
        }
    }
    out.into_iter().collect()
}

/// Full successor and predecessor tables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Completion {
    pub s: Vec<u32>,
    pub p: Vec<u32>,
}

impl Completion {
    /// Every `S`/`P` pair is mutually consistent: `S(x) = y ≠ x` iff
    /// `P(y) = x ≠ y`.
    pub fn is_line_structure(&self) -> bool {
        let n = self.s.len();
        (0..n).all(|x| {
            let y = self.s[x] as usize;
            (y == x || self.p[y] as usize == x) && {
                let z = self.p[x] as usize;
                z == x || self.s[z] as usize == x
            }
        }) && self.p[0] == 0
    }

    pub fn agrees_with(&self, log: &[QueryRecord]) -> bool {
        log.iter().all(|q| {
            let table = match q.kind {
                QueryKind::S => &self.s,
                QueryKind::P => &self.p,
            };
            table[q.vertex as usize] == q.answer
        })
    }

    /// Solutions of the completed instance.
    pub fn solutions(&self) -> Vec<u32> {
        let mut out = Vec::new();
        let (s, p) = (&self.s, &self.p);
        let ps0 = p[s[0] as usize];
        let sp0 = s[p[0] as usize];
        if (ps0 == 0) == (sp0 == 0) {
            out.push(0);
        }
        for x in 1..s.len() as u32 {
            if p[s[x as usize] as usize] != x || s[p[x as usize] as usize] != x {
                out.push(x);
            }
        }
        out
    }
}

/// Completes the answers in `log` into a full instance. If the path from 0
/// is still open, the other open chains follow it in order of their first
/// vertex, then every vertex no answer mentions, then a known sink if there
/// is one. Otherwise the open chains close into cycles.
pub fn complete_instance(k: usize, log: &[QueryRecord]) -> Result<Completion> {
    let size = 1usize << k;
    let mut s: Vec<Option<u32>> = vec![None; size];
    let mut p: Vec<Option<u32>> = vec![None; size];
    let set = |table: &mut Vec<Option<u32>>, x: u32, y: u32| -> Result<()> {
        let slot = table.get_mut(x as usize).ok_or_else(|| invalid(format!("vertex {x} out of range")))?;
        match slot {
            Some(prev) if *prev != y => Err(invalid(format!("answers for {x} disagree"))),
            _ => {
                *slot = Some(y);
                Ok(())
            }
        }
    };
    p[0] = Some(0);
    for q in log {
        match q.kind {
            QueryKind::S => {
                set(&mut s, q.vertex, q.answer)?;
                if q.answer != q.vertex {
                    set(&mut p, q.answer, q.vertex)?;
                }
            }
            QueryKind::P => {
                set(&mut p, q.vertex, q.answer)?;
                if q.answer != q.vertex {
                    set(&mut s, q.answer, q.vertex)?;
                }
            }
        }
    }
    // Chains start at vertices with no known predecessor edge.
    let mut central = Vec::new();
    let mut open = Vec::new();
    let mut fresh = Vec::new();
    let mut closed = Vec::new();
    for x in 0..size as u32 {
        if x != 0 && p[x as usize].is_some_and(|y| y != x) {
            continue;
        }
        let mut v = x;
        let mut steps = 0;
        while let Some(w) = s[v as usize].filter(|&w| w != v) {
            v = w;
            steps += 1;
            if steps > size {
                return Err(invalid("answers form a cycle through 0 or a source"));
            }
        }
        let head_open = x != 0 && p[x as usize].is_none();
        let tail_open = s[v as usize].is_none();
        let chain = (x, v);
        if x == 0 {
            central.push(chain);
        } else if !head_open {
            // Already a source or isolated; nothing can feed it.
        } else if !tail_open {
            closed.push(chain);
        } else if x == v && s[x as usize].is_none() && p[x as usize].is_none() {
            fresh.push(chain);
        } else {
            open.push(chain);
        }
    }
    let link = |s: &mut Vec<Option<u32>>, p: &mut Vec<Option<u32>>, from: u32, to: u32| {
        s[from as usize] = Some(to);
        p[to as usize] = Some(from);
    };
    let (_, central_tail) = central[0];
    let middle: Vec<(u32, u32)> = open.into_iter().chain(fresh).collect();
    if s[central_tail as usize].is_none() {
        // One line from 0 through every open chain, ending in a known sink
        // if there is one and otherwise at the last (preferably fresh) tail.
        let mut tail = central_tail;
        for &(h, t) in middle.iter().chain(closed.first()) {
            link(&mut s, &mut p, tail, h);
            tail = t;
        }
    } else {
        // The line from 0 is already finished: the remaining open chains
        // close into cycles, which contain no solution.
        for &(h, t) in &middle {
            link(&mut s, &mut p, t, h);
        }
    }
    let s: Vec<u32> = s.iter().enumerate().map(|(x, v)| v.unwrap_or(x as u32)).collect();
    let p: Vec<u32> = p.iter().enumerate().map(|(x, v)| v.unwrap_or(x as u32)).collect();
    Ok(Completion { s, p })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adversary_first_answers() {
        let o = EndOfLineOracle::adversarial(3).unwrap();
        assert_eq!(o.predecessor(5).unwrap(), 0);
        assert_eq!(o.predecessor(6).unwrap(), 5);
        assert_eq!(o.successor(2).unwrap(), 1);
        assert_eq!(o.predecessor(5).unwrap(), 0);
        assert_eq!(o.predecessor(1).unwrap(), 2);
        assert!(certified_solutions(&o.log()).is_empty());
    }

    #[test]
    fn explicit_path_tables() {
        let o = EndOfLineOracle::explicit_path(2, &[0, 2, 1]).unwrap();
        assert_eq!(o.successor(0).unwrap(), 2);
        assert_eq!(o.predecessor(1).unwrap(), 2);
        assert_eq!(o.successor(1).unwrap(), 1);
        assert_eq!(o.successor(3).unwrap(), 3);
        assert_eq!(o.line_end(), Some(1));
        assert!(EndOfLineOracle::explicit_path(2, &[1, 2]).is_err());
        assert!(EndOfLineOracle::explicit_path(2, &[0, 2, 2]).is_err());
    }
}
