//! Symbolic combinatorics of Markov holes: the survivor language of an m-adic
//! map whose hole is a union of cylinders.

use super::hole::{word_index, HoleKind};
use super::open::OpenSystem;
use crate::error::{Error, Result};
use crate::linalg::spectral_radius_nonneg;

/// Forbidden-word description of a cylinder hole at a fixed level.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolicHole {
    pub base: u32,
    pub level: usize,
    /// `forbidden[index(w)]` for every level-`level` word `w`.
    forbidden: Vec<bool>,
    /// Level of the hole words before lifting, and their forbidden table.
    /// Word enumeration checks factors at this level so that the last
    /// symbols of a word are constrained too.
    hole_level: usize,
    hole_forbidden: Vec<bool>,
}

impl SymbolicHole {
    /// Lifts the hole of `sys` to level `k`. Fails unless the map is Markov
    /// with the hole's base and the hole is a cylinder union of level `<= k`.
    pub fn from_system(sys: &OpenSystem, k: usize) -> Result<Self> {
        let base = sys
            .map
            .markov_base()
            .ok_or_else(|| Error::IncompatibleHole(format!("{} has no m-adic Markov partition", sys.map_label())))?;
        let (hole_base, level, words): (u32, usize, Vec<Vec<u8>>) = match sys.hole.kind() {
            HoleKind::Empty => (base, 0, Vec::new()),
            HoleKind::CylinderUnion { base, level, words } => (*base, *level, words.clone()),
            other => {
                return Err(Error::IncompatibleHole(format!(
                    "hole kind {other:?} is not a cylinder union"
                )))
            }
        };
        if hole_base != base {
            return Err(Error::IncompatibleHole(format!(
                "hole is written in base {hole_base} but the map has {base} branches"
            )));
        }
        if level > k {
            return Err(Error::IncompatibleHole(format!("hole level {level} exceeds requested level {k}")));
        }
        Self::from_words(base, level, &words, k)
    }

    /// Builds from level-`level` words, extended to level `k >= level` by
    /// appending every continuation.
    pub fn from_words(base: u32, level: usize, words: &[Vec<u8>], k: usize) -> Result<Self> {
        if k == 0 && !words.is_empty() {
            return Err(Error::IncompatibleHole("level-0 hole must be empty".into()));
        }
        (base as usize)
            .checked_pow(k as u32)
            .filter(|&s| s <= 1 << 24)
            .ok_or_else(|| Error::IncompatibleHole(format!("level {k} too deep for base {base}")))?;
        if level > k {
            return Err(Error::IncompatibleHole(format!("hole level {level} exceeds requested level {k}")));
        }
        let lift = |to: usize| {
            let mut table = vec![false; (base as usize).pow(to as u32)];
            let tail = (base as u64).pow((to - level) as u32);
            for w in words {
                let start = word_index(w, base) * tail;
                for id in start..start + tail {
                    table[id as usize] = true;
                }
            }
            table
        };
        Ok(Self {
            base,
            level: k,
            forbidden: lift(k),
            hole_level: level,
            hole_forbidden: lift(level),
        })
    }

    pub fn is_forbidden(&self, word: &[u8]) -> bool {
        word.len() == self.level && self.forbidden[word_index(word, self.base) as usize]
    }

    fn hits_hole(&self, factor: &[u8]) -> bool {
        self.hole_forbidden[word_index(factor, self.base) as usize]
    }

    /// `true` iff no factor of `word` is a hole word.
    pub fn admits(&self, word: &[u8]) -> bool {
        self.hole_level == 0 || word.windows(self.hole_level).all(|f| !self.hits_hole(f))
    }

    /// Number of states of the transition graph: words of length `level - 1`.
    pub fn state_count(&self) -> usize {
        (self.base as usize).pow(self.level.saturating_sub(1) as u32)
    }

    /// Adjacency matrix on `(level-1)`-words: `s -> t` when `s` and `t`
    /// overlap in `level - 2` symbols and their union is admitted.
    pub fn transition_matrix(&self) -> Vec<Vec<f64>> {
        let m = self.base as usize;
        if self.level <= 1 {
            let allowed = (0..m).filter(|&d| self.level == 0 || !self.forbidden[d]).count();
            return vec![vec![allowed as f64]];
        }
        let states = self.state_count();
        let mut a = vec![vec![0.0; states]; states];
        for (id, &bad) in self.forbidden.iter().enumerate() {
            if bad {
                continue;
            }
            let from = id / m;
            let to = id % states;
            a[from][to] += 1.0;
        }
        a
    }

    /// Number of admitted words of length `n`.
    pub fn count(&self, n: usize) -> u128 {
        if self.hole_level < self.level {
            return Self::from_words_table(self.base, self.hole_level, self.hole_forbidden.clone()).count(n);
        }
        let m = self.base as u128;
        if self.level == 0 || n + 1 < self.level {
            return m.pow(n as u32);
        }
        let a = self.transition_matrix();
        let mut v: Vec<u128> = vec![1; a.len()];
        // words of length level-1 are the states; each step appends a symbol
        for _ in 0..(n + 1 - self.level) {
            let mut w = vec![0u128; v.len()];
            for (i, row) in a.iter().enumerate() {
                for (j, &x) in row.iter().enumerate() {
                    if x > 0.0 {
                        w[j] += v[i] * x as u128;
                    }
                }
            }
            v = w;
        }
        v.iter().sum()
    }

    /// Level of the hole words before lifting.
    pub fn hole_level(&self) -> usize {
        self.hole_level
    }

    /// Lebesgue measure of the union of admitted `n`-cylinders,
    /// `count(n) / base^n`, computed in floating point without overflow.
    pub fn cylinder_mass(&self, n: usize) -> f64 {
        let l = self.hole_level;
        let m = self.base as f64;
        if l == 0 || n + 1 < l {
            return 1.0;
        }
        let native = SymbolicHole::from_words_table(self.base, l, self.hole_forbidden.clone());
        let a = native.transition_matrix();
        // mass carried by each (l-1)-word prefix class
        let mut v = vec![m.powi(-(l.max(1) as i32 - 1)); a.len()];
        for _ in 0..(n + 1 - l) {
            let mut w = vec![0.0; v.len()];
            for (i, row) in a.iter().enumerate() {
                for (j, &x) in row.iter().enumerate() {
                    if x > 0.0 {
                        w[j] += v[i] * x / m;
                    }
                }
            }
            v = w;
        }
        v.iter().sum()
    }

    fn from_words_table(base: u32, level: usize, table: Vec<bool>) -> Self {
        Self {
            base,
            level,
            forbidden: table.clone(),
            hole_level: level,
            hole_forbidden: table,
        }
    }

    /// Perron root of the transition matrix; the topological entropy of the
    /// survivor shift is its logarithm.
    pub fn perron_root(&self) -> f64 {
        spectral_radius_nonneg(&self.transition_matrix())
    }

    /// All admitted words of length `n`, lexicographically ordered.
    pub fn words(&self, n: usize) -> Vec<Vec<u8>> {
        let mut out = Vec::new();
        let mut buf = Vec::with_capacity(n);
        self.extend(&mut buf, n, &mut out);
        out
    }

    fn extend(&self, buf: &mut Vec<u8>, n: usize, out: &mut Vec<Vec<u8>>) {
        if buf.len() == n {
            out.push(buf.clone());
            return;
        }
        for d in 0..self.base as u8 {
            buf.push(d);
            let l = self.hole_level;
            let ok = l == 0 || buf.len() < l || !self.hits_hole(&buf[buf.len() - l..]);
            if ok {
                self.extend(buf, n, out);
            }
            buf.pop();
        }
    }
}

impl OpenSystem {
    pub(crate) fn map_label(&self) -> String {
        use super::model::MapModel;
        self.map.label()
    }
}

/// Surviving symbolic `n`-words of a Markov hole at level `k`: the words
/// with no forbidden length-`k` factor, i.e. those whose cylinders stay out
/// of the hole for the `n - k + 1` steps they determine.
pub fn markov_words(sys: &OpenSystem, k: usize, n: usize) -> Result<Vec<Vec<u8>>> {
    Ok(SymbolicHole::from_system(sys, k)?.words(n))
}

/// Cardinality version of [`markov_words`], via transfer-matrix powers.
pub fn markov_word_count(sys: &OpenSystem, k: usize, n: usize) -> Result<u128> {
    Ok(SymbolicHole::from_system(sys, k)?.count(n))
}
