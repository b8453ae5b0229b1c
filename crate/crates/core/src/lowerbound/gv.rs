//! Binary codes of length `m = 10k` with `2^k` words at pairwise Hamming
//! distance at least `⌈m/4⌉`.
//!
//! Words are `u128` read as strings: the first character is the most
//! significant of the low `m` bits, so string order is integer order.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::error::{invalid, Error, Result};

/// Largest supported `k`; `m = 10k` must fit in a `u128`.
pub const MAX_K: usize = 12;

/// Largest `k` built purely by the lexicographic rule. The search cost grows
/// about 60-fold per step of `k` (6·10⁶ nodes at k = 5, 2.7·10⁷ at k = 6).
pub const GREEDY_MAX_K: usize = 6;

/// Search nodes the lexicographic construction may visit before handing
/// over to the seeded search.
pub const GREEDY_NODE_BUDGET: u64 = 1 << 25;

/// Random candidates the seeded search may draw.
const RANDOM_DRAW_BUDGET: u64 = 1 << 22;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Construction {
    /// Every word came from the lexicographic scan.
    Greedy,
    /// The scan ran out of budget; later words were drawn at random.
    Seeded,
}

#[derive(Clone, Debug)]
pub struct GvCode {
    k: usize,
    m: usize,
    min_distance: u32,
    words: Vec<u128>,
    index: HashMap<u128, u32>,
    construction: Construction,
    greedy_words: usize,
}

fn dist(a: u128, b: u128) -> u32 {
    (a ^ b).count_ones()
}

fn far_from_all(w: u128, words: &[u128], d: u32) -> bool {
    words.iter().all(|&c| dist(w, c) >= d)
}

/// Depth-first search for the smallest completion of the bits below `bit`
/// (inclusive) keeping every accepted word at distance `≥ d`. `dists` holds
/// the distances on the bits already fixed.
fn complete(
    w: u128,
    bit: i32,
    words: &[u128],
    dists: &mut [u32],
    d: u32,
    nodes: &mut u64,
) -> Option<u128> {
    if bit < 0 {
        return Some(w);
    }
    if *nodes == 0 {
        return None;
    }
    *nodes -= 1;
    let remaining = bit as u32;
    for choice in [0u128, 1] {
        let cand = w | (choice << bit);
        let mut ok = true;
        for (dc, &c) in dists.iter_mut().zip(words) {
            let diff = (((cand ^ c) >> bit) & 1) as u32;
            *dc += diff;
            ok &= *dc + remaining >= d;
        }
        if ok {
            if let Some(found) = complete(cand, bit - 1, words, dists, d, nodes) {
                return Some(found);
            }
        }
        for (dc, &c) in dists.iter_mut().zip(words) {
            *dc -= (((cand ^ c) >> bit) & 1) as u32;
        }
    }
    None
}

enum Next {
    Found(u128),
    Exhausted,
    OutOfBudget,
}

/// Smallest word above `after` (or the smallest word at all) at distance
/// `≥ d` from every accepted word.
fn next_word(words: &[u128], after: Option<u128>, m: usize, d: u32, nodes: &mut u64) -> Next {
    let Some(after) = after else {
        let mut dists = vec![0; words.len()];
        return match complete(0, m as i32 - 1, words, &mut dists, d, nodes) {
            Some(w) => Next::Found(w),
            None if *nodes == 0 => Next::OutOfBudget,
            None => Next::Exhausted,
        };
    };
    // The result first exceeds `after` at some zero bit `p` of `after`; lower
    // `p` means a smaller word, so try them from the bottom.
    for p in 0..m {
        if (after >> p) & 1 == 1 {
            continue;
        }
        let prefix = ((after >> p) | 1) << p;
        let mut dists: Vec<u32> = words.iter().map(|&c| ((prefix ^ c) >> p).count_ones()).collect();
        let remaining = p as u32;
        if dists.iter().any(|&dc| dc + remaining < d) {
            continue;
        }
        if let Some(w) = complete(prefix, p as i32 - 1, words, &mut dists, d, nodes) {
            return Next::Found(w);
        }
        if *nodes == 0 {
            return Next::OutOfBudget;
        }
    }
    Next::Exhausted
}

/// Builds the code for `k` vertex bits by the greedy lexicographic rule:
/// accept each word, in string order, whose distance to all accepted words
/// is at least `⌈m/4⌉`, until `2^k` are accepted.
///
/// Binary lexicodes are linear, so after `2^j` acceptances the next accepted
/// word `b` is followed by the words of the previous span shifted by `b`, in
/// order. Only `k` searches are therefore needed, each a pruned search for
/// the next admissible word.
///
/// Above [`GREEDY_MAX_K`], or if the search exceeds [`GREEDY_NODE_BUDGET`],
/// the words after the zero word are drawn from a ChaCha20 stream seeded by
/// `k`, under the same acceptance rule.
pub fn build_gv_code(k: usize) -> Result<GvCode> {
    if k == 0 || k > MAX_K {
        return Err(invalid(format!("k must lie in 1..={MAX_K}, got {k}")));
    }
    let m = 10 * k;
    let d = m.div_ceil(4) as u32;
    let wanted = 1usize << k;
    let mut words: Vec<u128> = vec![0];
    let mut nodes = GREEDY_NODE_BUDGET;
    let mut out_of_budget = k > GREEDY_MAX_K;
    while words.len() < wanted && !out_of_budget {
        match next_word(&words, words.last().copied(), m, d, &mut nodes) {
            Next::Found(b) => {
                let mut shifted: Vec<u128> = words.iter().map(|&c| c ^ b).collect();
                shifted.sort_unstable();
                words.extend(shifted);
            }
            Next::Exhausted => break,
            Next::OutOfBudget => {
                out_of_budget = true;
                break;
            }
        }
    }
    let greedy_words = words.len();
    let mut construction = Construction::Greedy;
    if out_of_budget {
        construction = Construction::Seeded;
        let mask = (1u128 << m) - 1;
        let mut rng = ChaCha20Rng::seed_from_u64(k as u64);
        let mut draws = 0;
        while words.len() < wanted && draws < RANDOM_DRAW_BUDGET {
            let c = rng.random::<u128>() & mask;
            if far_from_all(c, &words, d) {
                words.push(c);
            }
            draws += 1;
        }
    }
    if words.len() < wanted {
        return Err(Error::CodeConstruction { k, achieved: words.len(), wanted });
    }
    let index = words.iter().enumerate().map(|(i, &c)| (c, i as u32)).collect();
    Ok(GvCode { k, m, min_distance: d, words, index, construction, greedy_words })
}

impl GvCode {
    pub fn k(&self) -> usize {
        self.k
    }

    /// Code length `10k`.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Required distance `⌈m/4⌉`.
    pub fn min_distance(&self) -> u32 {
        self.min_distance
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn construction(&self) -> Construction {
        self.construction
    }

    /// Words found by the lexicographic scan before any seeded draw.
    pub fn greedy_words(&self) -> usize {
        self.greedy_words
    }

    pub fn codewords(&self) -> &[u128] {
        &self.words
    }

    /// Codeword of vertex `u`, in construction order.
    pub fn phi(&self, u: u32) -> Result<u128> {
        self.words
            .get(u as usize)
            .copied()
            .ok_or_else(|| invalid(format!("vertex {u} out of range for k = {}", self.k)))
    }

    /// Vertex of a codeword.
    pub fn psi(&self, word: u128) -> Option<u32> {
        self.index.get(&word).copied()
    }

    /// Bit `i` of a word, counting from the first character.
    pub fn bit(&self, word: u128, i: usize) -> bool {
        (word >> (self.m - 1 - i)) & 1 == 1
    }

    /// The word as a `0`/`1` string.
    pub fn to_bits(&self, word: u128) -> String {
        (0..self.m).map(|i| if self.bit(word, i) { '1' } else { '0' }).collect()
    }

    /// Indices of the one bits of `phi(u)`, in string order.
    pub fn ones(&self, u: u32) -> Result<Vec<usize>> {
        let w = self.phi(u)?;
        Ok((0..self.m).filter(|&i| self.bit(w, i)).collect())
    }

    /// `(phi(u), complement of phi(u))` as a 0/1 vector of length `2m`.
    pub fn encode(&self, u: u32) -> Result<Vec<u8>> {
        let w = self.phi(u)?;
        let head: Vec<u8> = (0..self.m).map(|i| self.bit(w, i) as u8).collect();
        let tail: Vec<u8> = head.iter().map(|b| 1 - b).collect();
        Ok([head, tail].concat())
    }

    /// Smallest pairwise distance, by exhaustive comparison.
    pub fn measured_min_distance(&self) -> u32 {
        let mut best = u32::MAX;
        for (i, &a) in self.words.iter().enumerate() {
            for &b in &self.words[i + 1..] {
                best = best.min(dist(a, b));
            }
        }
        best
    }
}
