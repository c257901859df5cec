//! Finite-state Markov machinery on the lifted pair alphabet.
//!
//! An observation stream `Y_0, Y_1, ...` over `N` states is lifted to the pair
//! chain `Z_l = (Y_{l-1}, Y_l)` over `N²` states. Pair `(i, j)` (0-based) has
//! flat index `i * N + j`; all file formats use the 1-based equivalent
//! `(i-1) * N + j`, which is the same enumeration.
//!
//! The test statistic is the conditional relative entropy
//!
//! ```text
//! D(Γ ‖ π) = Σ_ij Γ_ij · ln[ (Γ_ij / Σ_t Γ_it) / (π_ij / Σ_t π_it) ]
//! ```
//!
//! with the usual `0 · ln 0 = 0` convention.

use nalgebra::DMatrix;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, Rng};

/// Row sums and law totals must match 1 within this tolerance.
pub const STOCHASTIC_TOL: f64 = 1e-12;
/// Residual `‖πP − π‖∞` accepted from the matrix-power stationary law.
pub const STATIONARY_TOL: f64 = 1e-8;
/// Tolerance on the balance identity `Σ_t π_it = Σ_t π_ti`.
pub const BALANCE_TOL: f64 = 1e-10;
/// Floor applied to zero entries of a reference law before use.
pub const DEFAULT_FLOOR: f64 = 1e-8;
/// Default truncation order of matrix power series.
pub const DEFAULT_M0: usize = 1000;

/// The original alphabet `Ξ` of size `N` and its lifted pair alphabet `Θ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Alphabet {
    n_states: usize,
}

impl Alphabet {
    pub fn new(n_states: usize) -> Result<Self> {
        if n_states < 2 {
            return Err(Error::InvalidAlphabet(n_states));
        }
        Ok(Self { n_states })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn lifted_size(&self) -> usize {
        self.n_states * self.n_states
    }

    /// 0-based flat index of pair `(i, j)`.
    pub fn lifted_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n_states && j < self.n_states);
        i * self.n_states + j
    }

    /// Inverse of [`Alphabet::lifted_index`].
    pub fn pair(&self, k: usize) -> (usize, usize) {
        (k / self.n_states, k % self.n_states)
    }

    /// Recover the alphabet from a lifted length `N²`.
    pub fn from_lifted_size(len: usize) -> Result<Self> {
        let n = integer_sqrt(len).ok_or_else(|| {
            Error::Config(format!("lifted length {len} is not a perfect square"))
        })?;
        Self::new(n)
    }
}

fn integer_sqrt(len: usize) -> Option<usize> {
    let n = (len as f64).sqrt().round() as usize;
    (n * n == len).then_some(n)
}

/// Row-stochastic matrix. Used both for the original `N × N` chain and the
/// lifted `N² × N²` chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct TransitionMatrix {
    matrix: DMatrix<f64>,
}

impl TransitionMatrix {
    /// Build from row-major rows, validating stochasticity.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        for row in &rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
        }
        let matrix = DMatrix::from_fn(dim, dim, |r, c| rows[r][c]);
        Self::from_matrix(matrix)
    }

    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        for r in 0..matrix.nrows() {
            let mut sum = 0.0;
            for c in 0..matrix.ncols() {
                let v = matrix[(r, c)];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidEntry {
                        row: r,
                        col: c,
                        value: v,
                    });
                }
                sum += v;
            }
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::NotStochastic { row: r, sum });
            }
        }
        Ok(Self { matrix })
    }

    pub fn uniform(dim: usize) -> Self {
        Self {
            matrix: DMatrix::from_element(dim, dim, 1.0 / dim as f64),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.matrix[(row, col)]
    }

    pub fn row(&self, row: usize) -> Vec<f64> {
        self.matrix.row(row).iter().copied().collect()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim()).map(|r| self.row(r)).collect()
    }

    /// A valid original chain has every entry strictly positive.
    pub fn ensure_strictly_positive(&self) -> Result<()> {
        for r in 0..self.dim() {
            for c in 0..self.dim() {
                if self.matrix[(r, c)] <= 0.0 {
                    return Err(Error::NotStrictlyPositive { row: r, col: c });
                }
            }
        }
        Ok(())
    }

    /// Largest entrywise absolute difference.
    pub fn max_abs_diff(&self, other: &TransitionMatrix) -> f64 {
        (&self.matrix - &other.matrix).amax()
    }
}

impl TryFrom<Vec<Vec<f64>>> for TransitionMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(rows)
    }
}

impl From<TransitionMatrix> for Vec<Vec<f64>> {
    fn from(m: TransitionMatrix) -> Self {
        m.to_rows()
    }
}

/// A probability law over the lifted alphabet, stored in flat order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbabilityLaw {
    alphabet: Alphabet,
    values: Vec<f64>,
}

impl ProbabilityLaw {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let alphabet = Alphabet::from_lifted_size(values.len())?;
        let mut sum = 0.0;
        for (k, &v) in values.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                let (row, col) = alphabet.pair(k);
                return Err(Error::InvalidEntry { row, col, value: v });
            }
            sum += v;
        }
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::NotNormalized(sum));
        }
        Ok(Self { alphabet, values })
    }

    /// Normalize arbitrary nonnegative weights into a law.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::NotNormalized(total));
        }
        Self::new(weights.into_iter().map(|w| w / total).collect())
    }

    pub fn uniform(n_states: usize) -> Result<Self> {
        let alphabet = Alphabet::new(n_states)?;
        let len = alphabet.lifted_size();
        Ok(Self {
            alphabet,
            values: vec![1.0 / len as f64; len],
        })
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn n_states(&self) -> usize {
        self.alphabet.n_states
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, k: usize) -> f64 {
        self.values[k]
    }

    /// Probability of pair `(i, j)`, 0-based.
    pub fn pair(&self, i: usize, j: usize) -> f64 {
        self.values[self.alphabet.lifted_index(i, j)]
    }

    /// `Σ_t π_it`: mass of pairs leaving state `i`.
    pub fn row_mass(&self, i: usize) -> f64 {
        let n = self.n_states();
        self.values[i * n..(i + 1) * n].iter().sum()
    }

    /// `Σ_t π_ti`: mass of pairs entering state `i`.
    pub fn col_mass(&self, i: usize) -> f64 {
        let n = self.n_states();
        (0..n).map(|t| self.values[t * n + i]).sum()
    }

    pub fn has_full_support(&self) -> bool {
        self.values.iter().all(|&v| v > 0.0)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Replace entries below `floor` by `floor`, then renormalize.
    pub fn floored(&self, floor: f64) -> Result<Self> {
        if !(floor > 0.0) {
            return Err(Error::Domain {
                name: "floor",
                value: floor,
                domain: "(0, inf)",
            });
        }
        Self::from_weights(self.values.iter().map(|&v| v.max(floor)).collect())
    }

    pub fn max_abs_diff(&self, other: &ProbabilityLaw) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn total_variation(&self, other: &ProbabilityLaw) -> f64 {
        0.5 * self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}

impl TryFrom<Vec<f64>> for ProbabilityLaw {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<ProbabilityLaw> for Vec<f64> {
    fn from(law: ProbabilityLaw) -> Self {
        law.values
    }
}

/// Observations of the lifted chain, stored as 0-based flat indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolSequence {
    alphabet: Alphabet,
    symbols: Vec<u32>,
}

impl SymbolSequence {
    pub fn new(n_states: usize, symbols: Vec<u32>) -> Result<Self> {
        let alphabet = Alphabet::new(n_states)?;
        let size = alphabet.lifted_size();
        if let Some(&bad) = symbols.iter().find(|&&s| s as usize >= size) {
            return Err(Error::SymbolOutOfRange {
                symbol: bad as usize + 1,
                size,
            });
        }
        Ok(Self { alphabet, symbols })
    }

    /// Build from 1-based flat indices, as used in files.
    pub fn from_one_based(n_states: usize, symbols: &[usize]) -> Result<Self> {
        let alphabet = Alphabet::new(n_states)?;
        let size = alphabet.lifted_size();
        let zero_based = symbols
            .iter()
            .map(|&s| {
                if s == 0 || s > size {
                    Err(Error::SymbolOutOfRange { symbol: s, size })
                } else {
                    Ok((s - 1) as u32)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            alphabet,
            symbols: zero_based,
        })
    }

    /// Lift a stream over `Ξ` (0-based states) into consecutive pairs.
    /// `m` observations yield `m − 1` lifted symbols.
    pub fn lift_states(n_states: usize, states: &[usize]) -> Result<Self> {
        let alphabet = Alphabet::new(n_states)?;
        if let Some(&bad) = states.iter().find(|&&s| s >= n_states) {
            return Err(Error::SymbolOutOfRange {
                symbol: bad + 1,
                size: n_states,
            });
        }
        let symbols = states
            .windows(2)
            .map(|w| alphabet.lifted_index(w[0], w[1]) as u32)
            .collect();
        Ok(Self { alphabet, symbols })
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn n_states(&self) -> usize {
        self.alphabet.n_states
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[u32] {
        &self.symbols
    }

    pub fn to_one_based(&self) -> Vec<usize> {
        self.symbols.iter().map(|&s| s as usize + 1).collect()
    }

    /// Whether every pair `(i, j)` is followed by some `(j, l)`.
    pub fn is_feasible(&self) -> bool {
        let n = self.n_states() as u32;
        self.symbols.windows(2).all(|w| w[0] % n == w[1] / n)
    }

    pub fn concat(&self, other: &SymbolSequence) -> Result<Self> {
        if self.alphabet != other.alphabet {
            return Err(Error::AlphabetMismatch {
                expected: self.n_states(),
                found: other.n_states(),
            });
        }
        let mut symbols = self.symbols.clone();
        symbols.extend_from_slice(&other.symbols);
        Ok(Self {
            alphabet: self.alphabet,
            symbols,
        })
    }

    /// Occurrence counts per lifted symbol.
    pub fn counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.alphabet.lifted_size()];
        for &s in &self.symbols {
            counts[s as usize] += 1;
        }
        counts
    }
}

/// Lifted transition matrix: `P[(k,l),(i,j)] = 1{i = l} · q_ij`.
pub fn lift_transition(q: &TransitionMatrix) -> TransitionMatrix {
    let n = q.dim();
    let mut p = DMatrix::zeros(n * n, n * n);
    for k in 0..n {
        for l in 0..n {
            let row = k * n + l;
            for j in 0..n {
                p[(row, l * n + j)] = q.get(l, j);
            }
        }
    }
    TransitionMatrix { matrix: p }
}

/// Stationary law of a lifted chain together with its verification residual.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryLaw {
    pub law: ProbabilityLaw,
    /// `‖πP − π‖∞`.
    pub residual: f64,
}

/// `‖πP − π‖∞` for a row vector `π`.
pub fn stationarity_residual(pi: &[f64], p: &TransitionMatrix) -> f64 {
    let next = row_times(pi, p.as_matrix());
    next.iter()
        .zip(pi)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

fn row_times(v: &[f64], m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.ncols();
    let mut out = vec![0.0; n];
    for (i, &vi) in v.iter().enumerate() {
        if vi == 0.0 {
            continue;
        }
        for (j, o) in out.iter_mut().enumerate() {
            *o += vi * m[(i, j)];
        }
    }
    out
}

/// First row of `P^{m0}`, checked against `πP = π`.
pub fn stationary_law(p: &TransitionMatrix, m0: usize) -> Result<StationaryLaw> {
    if m0 == 0 {
        return Err(Error::Domain {
            name: "m0",
            value: 0.0,
            domain: "[1, inf)",
        });
    }
    Alphabet::from_lifted_size(p.dim())?;
    let mut row = vec![0.0; p.dim()];
    row[0] = 1.0;
    for _ in 0..m0 {
        row = row_times(&row, p.as_matrix());
    }
    let residual = stationarity_residual(&row, p);
    if residual >= STATIONARY_TOL {
        return Err(Error::Calibration(format!(
            "row of P^{m0} is not stationary (residual {residual:.3e}); increase m0"
        )));
    }
    let law = ProbabilityLaw::from_weights(row)?;
    Ok(StationaryLaw { law, residual })
}

/// Recover `Q` from a stationary pair law: `q_ij = π_ij / Σ_t π_it`.
///
/// Fails if the balance identity `Σ_t π_it = Σ_t π_ti` does not hold, which
/// indicates that `π` is not the stationary law of any lifted chain.
pub fn marginal_consistency(pi: &ProbabilityLaw) -> Result<TransitionMatrix> {
    for i in 0..pi.n_states() {
        let row_mass = pi.row_mass(i);
        let col_mass = pi.col_mass(i);
        if row_mass <= 0.0 {
            return Err(Error::DegenerateLaw { row: i });
        }
        if (row_mass - col_mass).abs() > BALANCE_TOL {
            return Err(Error::BalanceViolation {
                state: i,
                row_mass,
                col_mass,
            });
        }
    }
    conditional_rows(pi)
}

/// Row-normalize a pair law without checking balance.
pub(crate) fn conditional_rows(pi: &ProbabilityLaw) -> Result<TransitionMatrix> {
    let n = pi.n_states();
    let mut q = DMatrix::zeros(n, n);
    for i in 0..n {
        let mass = pi.row_mass(i);
        if mass <= 0.0 {
            return Err(Error::DegenerateLaw { row: i });
        }
        for j in 0..n {
            q[(i, j)] = pi.pair(i, j) / mass;
        }
    }
    TransitionMatrix::from_matrix(q)
}

/// How the first pair `Z_1 = (Y_0, Y_1)` of a sample path is drawn.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum InitialLaw {
    /// `Z_1 ~ π`, the stationary pair law of the chain.
    #[default]
    Stationary,
    /// `Z_1` drawn from an explicit pair law.
    Pairs(ProbabilityLaw),
    /// `Y_0` fixed (0-based), `Y_1 ~ q(Y_0, ·)`.
    State(usize),
}

#[derive(Debug, Clone)]
struct Categorical {
    cumulative: Vec<f64>,
    last_positive: usize,
}

impl Categorical {
    fn new(weights: &[f64]) -> Self {
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        let last_positive = weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
        Self {
            cumulative,
            last_positive,
        }
    }

    fn sample(&self, rng: &mut Rng) -> usize {
        let u: f64 = rng.random::<f64>() * self.cumulative[self.cumulative.len() - 1];
        let idx = self.cumulative.partition_point(|&c| c <= u);
        idx.min(self.last_positive)
    }
}

/// Reusable sampler for paths of the lifted chain driven by `Q`.
#[derive(Debug, Clone)]
pub struct ChainSampler {
    n_states: usize,
    rows: Vec<Categorical>,
    init: SamplerInit,
}

#[derive(Debug, Clone)]
enum SamplerInit {
    Pairs(Categorical),
    State(usize),
}

impl ChainSampler {
    pub fn new(q: &TransitionMatrix, init: &InitialLaw) -> Result<Self> {
        let n = q.dim();
        Alphabet::new(n)?;
        let rows = (0..n).map(|i| Categorical::new(&q.row(i))).collect();
        let init = match init {
            InitialLaw::Stationary => {
                SamplerInit::Pairs(Categorical::new(stationary_pair_law(q)?.values()))
            }
            InitialLaw::Pairs(law) => {
                if law.n_states() != n {
                    return Err(Error::AlphabetMismatch {
                        expected: n,
                        found: law.n_states(),
                    });
                }
                SamplerInit::Pairs(Categorical::new(law.values()))
            }
            InitialLaw::State(s) => {
                if *s >= n {
                    return Err(Error::SymbolOutOfRange {
                        symbol: s + 1,
                        size: n,
                    });
                }
                SamplerInit::State(*s)
            }
        };
        Ok(Self {
            n_states: n,
            rows,
            init,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    /// Path `Z_1..Z_n`.
    pub fn sample(&self, n: usize, rng: &mut Rng) -> SymbolSequence {
        let mut symbols = Vec::with_capacity(n);
        self.sample_into(n, rng, |z| symbols.push(z as u32));
        SymbolSequence {
            alphabet: Alphabet {
                n_states: self.n_states,
            },
            symbols,
        }
    }

    /// Counts of `Z_1..Z_n` without materializing the path.
    pub fn sample_counts(&self, n: usize, rng: &mut Rng) -> Vec<u64> {
        let mut counts = vec![0u64; self.n_states * self.n_states];
        self.sample_into(n, rng, |z| counts[z] += 1);
        counts
    }

    fn sample_into(&self, n: usize, rng: &mut Rng, mut emit: impl FnMut(usize)) {
        if n == 0 {
            return;
        }
        let (mut prev, mut cur) = match &self.init {
            SamplerInit::Pairs(c) => {
                let k = c.sample(rng);
                (k / self.n_states, k % self.n_states)
            }
            SamplerInit::State(s) => (*s, self.rows[*s].sample(rng)),
        };
        emit(prev * self.n_states + cur);
        for _ in 1..n {
            prev = cur;
            cur = self.rows[prev].sample(rng);
            emit(prev * self.n_states + cur);
        }
    }
}

/// Stationary pair law `π_ij = μ_i q_ij`, with `μ` the stationary law of `Q`.
pub fn stationary_pair_law(q: &TransitionMatrix) -> Result<ProbabilityLaw> {
    let n = q.dim();
    let mut mu = vec![1.0 / n as f64; n];
    let mut converged = false;
    for _ in 0..1_000_000 {
        let next = row_times(&mu, q.as_matrix());
        let change = next
            .iter()
            .zip(&mu)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        mu = next;
        if change < 1e-15 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Calibration(
            "stationary law of Q did not converge; chain may be periodic".into(),
        ));
    }
    let mut values = Vec::with_capacity(n * n);
    for (i, m) in mu.iter().enumerate() {
        for j in 0..n {
            values.push(m * q.get(i, j));
        }
    }
    ProbabilityLaw::from_weights(values)
}

/// Simulate `Y_0..Y_n` from `Q` and return `Z_1..Z_n`.
pub fn sample_chain(
    q: &TransitionMatrix,
    n: usize,
    seed: u64,
    init: &InitialLaw,
) -> Result<SymbolSequence> {
    if n == 0 {
        return Err(Error::EmptySequence);
    }
    let sampler = ChainSampler::new(q, init)?;
    Ok(sampler.sample(n, &mut rng_from_seed(seed)))
}

/// Empirical pair law `Γ_n`.
pub fn empirical_pl(z: &SymbolSequence) -> Result<ProbabilityLaw> {
    if z.is_empty() {
        return Err(Error::EmptySequence);
    }
    law_from_counts(z.n_states(), &z.counts())
}

pub(crate) fn law_from_counts(n_states: usize, counts: &[u64]) -> Result<ProbabilityLaw> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::EmptySequence);
    }
    let n = total as f64;
    Ok(ProbabilityLaw {
        alphabet: Alphabet::new(n_states)?,
        values: counts.iter().map(|&c| c as f64 / n).collect(),
    })
}

/// Conditional relative entropy `D(Γ ‖ π)` in nats.
pub fn divergence(gamma: &ProbabilityLaw, pi: &ProbabilityLaw) -> Result<f64> {
    if gamma.n_states() != pi.n_states() {
        return Err(Error::AlphabetMismatch {
            expected: pi.n_states(),
            found: gamma.n_states(),
        });
    }
    let n = gamma.n_states();
    let mut total = 0.0;
    for i in 0..n {
        let gamma_row = gamma.row_mass(i);
        if gamma_row == 0.0 {
            continue;
        }
        let pi_row = pi.row_mass(i);
        for j in 0..n {
            let g = gamma.pair(i, j);
            if g == 0.0 {
                continue;
            }
            let p = pi.pair(i, j);
            if p == 0.0 {
                return Err(Error::SupportViolation(i * n + j + 1));
            }
            total += g * ((g / gamma_row) / (p / pi_row)).ln();
        }
    }
    Ok(total.max(0.0))
}

/// Hoeffding's decision rule: `true` reports an anomaly.
pub fn hoeffding_decide(d: f64, eta: f64) -> bool {
    d > eta
}
