use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Tolerance used when validating caller-supplied probability rows.
const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// A discrete-observation HMM `(A, B, pi)`.
///
/// States are `0..n_states` and symbols `0..n_symbols`. Matrices are stored
/// row-major: `transition[i * n_states + j]` is the probability of moving from
/// state `i` to `j`, and `emission[i * n_symbols + k]` the probability that
/// state `i` emits symbol `k`. Every row (and `initial`) is a probability
/// distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmParams {
    n_states: usize,
    n_symbols: usize,
    transition: Vec<f64>,
    emission: Vec<f64>,
    initial: Vec<f64>,
}

impl HmmParams {
    /// Builds a model from nested rows, validating shape and stochasticity.
    pub fn new(
        transition: Vec<Vec<f64>>,
        emission: Vec<Vec<f64>>,
        initial: Vec<f64>,
    ) -> Result<Self> {
        let n_states = initial.len();
        if n_states == 0 {
            return Err(Error::invalid("model needs at least one state"));
        }
        let n_symbols = emission.first().map_or(0, Vec::len);
        if n_symbols == 0 {
            return Err(Error::invalid("model needs at least one symbol"));
        }
        if transition.len() != n_states || transition.iter().any(|r| r.len() != n_states) {
            return Err(Error::invalid(format!(
                "transition matrix must be {n_states}x{n_states}"
            )));
        }
        if emission.len() != n_states || emission.iter().any(|r| r.len() != n_symbols) {
            return Err(Error::invalid(format!(
                "emission matrix must be {n_states}x{n_symbols}"
            )));
        }
        let params = HmmParams {
            n_states,
            n_symbols,
            transition: transition.concat(),
            emission: emission.concat(),
            initial,
        };
        params.validate(ROW_SUM_TOLERANCE)?;
        Ok(params)
    }

    /// Near-uniform random model.
    ///
    /// Each entry starts at the uniform value for its row and is scaled by
    /// `1 + u` with `u ~ U[-perturbation, perturbation]`; the row is then
    /// renormalized. Rows are drawn in the order `pi`, `A`, `B` from a ChaCha8
    /// stream seeded with `seed`.
    pub fn init_random(
        n_states: usize,
        n_symbols: usize,
        seed: u64,
        perturbation: f64,
    ) -> Result<Self> {
        if n_states == 0 || n_symbols == 0 {
            return Err(Error::invalid(format!(
                "state and symbol counts must be positive (got N={n_states}, M={n_symbols})"
            )));
        }
        if !(perturbation > 0.0 && perturbation < 1.0) {
            return Err(Error::invalid(format!(
                "perturbation must lie in (0, 1), got {perturbation}"
            )));
        }
        let mut rng = seed::rng(seed);
        let mut row = |len: usize| -> Vec<f64> {
            let base = 1.0 / len as f64;
            let mut r: Vec<f64> = (0..len)
                .map(|_| base * (1.0 + rng.gen_range(-perturbation..=perturbation)))
                .collect();
            normalize(&mut r);
            r
        };
        let initial = row(n_states);
        let transition = (0..n_states).flat_map(|_| row(n_states)).collect();
        let emission = (0..n_states).flat_map(|_| row(n_symbols)).collect();
        Ok(HmmParams {
            n_states,
            n_symbols,
            transition,
            emission,
            initial,
        })
    }

    /// Assembles a model from flat row-major storage without validation.
    pub(crate) fn from_parts(
        n_states: usize,
        n_symbols: usize,
        transition: Vec<f64>,
        emission: Vec<f64>,
        initial: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(transition.len(), n_states * n_states);
        debug_assert_eq!(emission.len(), n_states * n_symbols);
        debug_assert_eq!(initial.len(), n_states);
        HmmParams {
            n_states,
            n_symbols,
            transition,
            emission,
            initial,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_symbols(&self) -> usize {
        self.n_symbols
    }

    #[inline]
    pub fn a(&self, from: usize, to: usize) -> f64 {
        self.transition[from * self.n_states + to]
    }

    #[inline]
    pub fn b(&self, state: usize, symbol: usize) -> f64 {
        self.emission[state * self.n_symbols + symbol]
    }

    #[inline]
    pub fn pi(&self, state: usize) -> f64 {
        self.initial[state]
    }

    pub fn transition_row(&self, state: usize) -> &[f64] {
        &self.transition[state * self.n_states..(state + 1) * self.n_states]
    }

    pub fn emission_row(&self, state: usize) -> &[f64] {
        &self.emission[state * self.n_symbols..(state + 1) * self.n_symbols]
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    /// Checks shapes, entry range and that every row sums to one within `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        if self.transition.len() != self.n_states * self.n_states
            || self.emission.len() != self.n_states * self.n_symbols
            || self.initial.len() != self.n_states
        {
            return Err(Error::invalid("matrix storage does not match dimensions"));
        }
        let rows = std::iter::once(("pi", 0, &self.initial[..]))
            .chain((0..self.n_states).map(|i| ("A", i, self.transition_row(i))))
            .chain((0..self.n_states).map(|i| ("B", i, self.emission_row(i))));
        for (name, i, row) in rows {
            if let Some(x) = row.iter().find(|x| !(0.0..=1.0).contains(*x)) {
                return Err(Error::invalid(format!(
                    "{name} row {i} has entry {x} outside [0, 1]"
                )));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > tol {
                return Err(Error::invalid(format!(
                    "{name} row {i} sums to {s}, not 1"
                )));
            }
        }
        Ok(())
    }

    /// Largest deviation of any row sum from one.
    pub fn max_row_sum_error(&self) -> f64 {
        let dev = |r: &[f64]| (r.iter().sum::<f64>() - 1.0).abs();
        (0..self.n_states)
            .flat_map(|i| [dev(self.transition_row(i)), dev(self.emission_row(i))])
            .fold(dev(&self.initial), f64::max)
    }
}

/// Scales a non-negative row to sum to one. All-zero rows are left untouched.
pub(crate) fn normalize(row: &mut [f64]) {
    let s: f64 = row.iter().sum();
    if s > 0.0 {
        row.iter_mut().for_each(|x| *x /= s);
    }
}

/// A sequence of symbol indices.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObservationSequence(Vec<u32>);

impl ObservationSequence {
    pub fn new(symbols: Vec<u32>) -> Self {
        ObservationSequence(symbols)
    }

    pub fn symbols(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Concatenates sequences in the given order.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a ObservationSequence>) -> Self {
        ObservationSequence(parts.into_iter().flat_map(|s| s.0.iter().copied()).collect())
    }

    /// Rejects empty sequences and symbols `>= n_symbols`.
    pub fn check(&self, n_symbols: usize) -> Result<()> {
        if self.0.is_empty() {
            return Err(Error::EmptySequence);
        }
        match self.0.iter().position(|&s| s as usize >= n_symbols) {
            Some(position) => Err(Error::SymbolOutOfRange {
                symbol: self.0[position],
                position,
                n_symbols,
            }),
            None => Ok(()),
        }
    }
}

impl From<Vec<u32>> for ObservationSequence {
    fn from(v: Vec<u32>) -> Self {
        ObservationSequence(v)
    }
}
