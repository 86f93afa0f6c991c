//! Symplectic Pauli strings and real-weighted Pauli sums.
//!
//! A [`PauliString`] on `n` qubits is stored as two bit masks `x`, `z` and a
//! phase exponent `e`, representing
//!
//! ```text
//!   i^e · σ(x_0, z_0) ⊗ σ(x_1, z_1) ⊗ … ⊗ σ(x_{n-1}, z_{n-1})
//! ```
//!
//! with `σ(0,0)=I, σ(1,0)=X, σ(0,1)=Z, σ(1,1)=Y`. Qubit 0 is the leftmost
//! tensor factor and owns the most significant bit of a computational basis
//! index, so the masks double as basis-index masks for dense work.

use std::cmp::Ordering;
use std::fmt;
use std::ops::Mul;
use std::str::FromStr;

use num_complex::Complex64;

use crate::dense::{check_dense, CMatrix};
use crate::error::{Error, Result};

const MAX_QUBITS: usize = 64;

/// `i^k` for `k mod 4`.
pub(crate) fn i_pow(k: u32) -> Complex64 {
    match k % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PauliString {
    n: usize,
    x: u64,
    z: u64,
    phase: u8,
}

impl PauliString {
    pub fn identity(n_qubits: usize) -> Result<Self> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(Error::QubitCount(n_qubits));
        }
        Ok(Self {
            n: n_qubits,
            x: 0,
            z: 0,
            phase: 0,
        })
    }

    /// Builds a phase-free string from `(qubit, letter)` pairs; unlisted qubits are `I`.
    pub fn from_letters(n_qubits: usize, ops: &[(usize, char)]) -> Result<Self> {
        let mut p = Self::identity(n_qubits)?;
        for &(q, letter) in ops {
            if q >= n_qubits {
                return Err(Error::Index(format!(
                    "qubit {q} on a {n_qubits}-qubit string"
                )));
            }
            let (xb, zb) = match letter.to_ascii_uppercase() {
                'I' => (false, false),
                'X' => (true, false),
                'Y' => (true, true),
                'Z' => (false, true),
                other => {
                    return Err(Error::Parse {
                        line: 0,
                        msg: format!("unknown Pauli letter {other:?}"),
                    })
                }
            };
            let bit = p.bit(q);
            p.x = (p.x & !bit) | if xb { bit } else { 0 };
            p.z = (p.z & !bit) | if zb { bit } else { 0 };
        }
        Ok(p)
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    /// X-part mask in basis-index convention (qubit `q` at bit `n-1-q`).
    pub fn x_mask(&self) -> u64 {
        self.x
    }

    pub fn z_mask(&self) -> u64 {
        self.z
    }

    /// Exponent `e` of the overall `i^e` phase.
    pub fn phase_exponent(&self) -> u8 {
        self.phase
    }

    pub fn phase(&self) -> Complex64 {
        i_pow(self.phase as u32)
    }

    pub fn with_phase_exponent(mut self, e: u8) -> Self {
        self.phase = e % 4;
        self
    }

    pub fn without_phase(self) -> Self {
        self.with_phase_exponent(0)
    }

    pub fn is_phase_free(&self) -> bool {
        self.phase == 0
    }

    /// True for `I⊗…⊗I`, regardless of phase.
    pub fn is_identity(&self) -> bool {
        self.x == 0 && self.z == 0
    }

    pub fn weight(&self) -> u32 {
        (self.x | self.z).count_ones()
    }

    fn bit(&self, q: usize) -> u64 {
        1u64 << (self.n - 1 - q)
    }

    pub fn letter(&self, q: usize) -> char {
        let b = self.bit(q);
        match (self.x & b != 0, self.z & b != 0) {
            (false, false) => 'I',
            (true, false) => 'X',
            (true, true) => 'Y',
            (false, true) => 'Z',
        }
    }

    /// Letters without the phase, e.g. `"XIZ"`.
    pub fn letters(&self) -> String {
        (0..self.n).map(|q| self.letter(q)).collect()
    }

    /// Qubits where this string acts non-trivially, in ascending order.
    pub fn support(&self) -> Vec<usize> {
        (0..self.n)
            .filter(|&q| (self.x | self.z) & self.bit(q) != 0)
            .collect()
    }

    pub fn commutes_with(&self, other: &Self) -> bool {
        ((self.x & other.z).count_ones() + (self.z & other.x).count_ones()).is_multiple_of(2)
    }

    /// Product `self · other` with the phase tracked exactly.
    pub fn product(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::QubitMismatch {
                left: self.n,
                right: other.n,
            });
        }
        // i^{e}σ(x,z) = i^{e + |x∧z|} X^x Z^z, and Z^{z1} X^{x2} = (-1)^{|z1∧x2|} X^{x2} Z^{z1}.
        let x = self.x ^ other.x;
        let z = self.z ^ other.z;
        let raw = self.phase as u32
            + other.phase as u32
            + (self.x & self.z).count_ones()
            + (other.x & other.z).count_ones()
            + 2 * (self.z & other.x).count_ones();
        let phase = (raw + 4 * 64 - (x & z).count_ones()) % 4;
        Ok(Self {
            n: self.n,
            x,
            z,
            phase: phase as u8,
        })
    }

    /// `self ⊗ other`, with `self` on the leading qubits.
    pub fn tensor(&self, other: &Self) -> Result<Self> {
        let n = self.n + other.n;
        if n > MAX_QUBITS {
            return Err(Error::QubitCount(n));
        }
        Ok(Self {
            n,
            x: (self.x << other.n) | other.x,
            z: (self.z << other.n) | other.z,
            phase: (self.phase + other.phase) % 4,
        })
    }

    /// Image of the basis state `|b⟩`: `P|b⟩ = amp · |b ⊕ x⟩`.
    #[inline]
    pub fn apply_to_basis(&self, b: usize) -> (usize, Complex64) {
        let b = b as u64;
        let k = self.phase as u32 + (self.x & self.z).count_ones() + 2 * (self.z & b).count_ones();
        ((b ^ self.x) as usize, i_pow(k))
    }

    pub fn to_dense(&self) -> Result<CMatrix> {
        let dim = check_dense(self.n)?;
        let mut m = CMatrix::zeros(dim, dim);
        for b in 0..dim {
            let (r, amp) = self.apply_to_basis(b);
            m[(r, b)] = amp;
        }
        Ok(m)
    }

    /// Trace of the dense operator: `2^n·phase` for the identity, zero otherwise.
    pub fn trace(&self) -> Complex64 {
        if self.is_identity() {
            self.phase() * (self.n as f64).exp2()
        } else {
            Complex64::new(0.0, 0.0)
        }
    }
}

impl Mul for PauliString {
    type Output = PauliString;

    /// Panics on a qubit-count mismatch; use [`PauliString::product`] to handle it.
    fn mul(self, rhs: Self) -> Self {
        self.product(&rhs).expect("pauli product qubit mismatch")
    }
}

impl Ord for PauliString {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.n, self.letters(), self.phase).cmp(&(other.n, other.letters(), other.phase))
    }
}

impl PartialOrd for PauliString {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = ["", "i", "-", "-i"][self.phase as usize];
        write!(f, "{prefix}{}", self.letters())
    }
}

impl FromStr for PauliString {
    type Err = Error;

    /// Parses letters with an optional phase prefix: `XYZ`, `-iXX`, `+ZI`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (phase, rest) = if let Some(r) = s.strip_prefix("-i") {
            (3, r)
        } else if let Some(r) = s.strip_prefix("+i") {
            (1, r)
        } else if let Some(r) = s.strip_prefix('i') {
            (1, r)
        } else if let Some(r) = s.strip_prefix('-') {
            (2, r)
        } else if let Some(r) = s.strip_prefix('+') {
            (0, r)
        } else {
            (0, s)
        };
        let ops: Vec<(usize, char)> = rest.chars().enumerate().collect();
        let p = Self::from_letters(ops.len(), &ops)?;
        Ok(p.with_phase_exponent(phase))
    }
}

/// Real linear combination of phase-free Pauli strings, kept sorted and merged.
#[derive(Clone, Debug, PartialEq)]
pub struct PauliSum {
    n: usize,
    terms: Vec<(f64, PauliString)>,
}

impl PauliSum {
    pub fn zero(n_qubits: usize) -> Result<Self> {
        PauliString::identity(n_qubits)?;
        Ok(Self {
            n: n_qubits,
            terms: Vec::new(),
        })
    }

    /// Collects terms, folding `±1` phases into the coefficient and merging duplicates.
    ///
    /// Strings carrying a `±i` phase would make the sum non-Hermitian and are rejected.
    pub fn from_terms<I>(n_qubits: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, PauliString)>,
    {
        let mut out = Self::zero(n_qubits)?;
        for (c, p) in terms {
            out.add_term(c, p)?;
        }
        Ok(out)
    }

    fn add_term(&mut self, coeff: f64, p: PauliString) -> Result<()> {
        if p.n_qubits() != self.n {
            return Err(Error::QubitMismatch {
                left: self.n,
                right: p.n_qubits(),
            });
        }
        if !coeff.is_finite() {
            return Err(Error::NonFinite("pauli sum coefficient"));
        }
        let coeff = match p.phase_exponent() {
            0 => coeff,
            2 => -coeff,
            _ => {
                return Err(Error::Config(format!(
                    "term {p} has an imaginary phase; pauli sums must be Hermitian"
                )))
            }
        };
        let key = p.without_phase();
        match self.terms.binary_search_by(|(_, q)| q.cmp(&key)) {
            Ok(i) => {
                self.terms[i].0 += coeff;
                if self.terms[i].0 == 0.0 {
                    self.terms.remove(i);
                }
            }
            Err(i) => {
                if coeff != 0.0 {
                    self.terms.insert(i, (coeff, key));
                }
            }
        }
        Ok(())
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &[(f64, PauliString)] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn identity_coefficient(&self) -> f64 {
        self.terms
            .iter()
            .find(|(_, p)| p.is_identity())
            .map_or(0.0, |(c, _)| *c)
    }

    pub fn is_traceless(&self) -> bool {
        self.identity_coefficient() == 0.0
    }

    /// Drops the identity term; it only contributes a global phase to `exp(-iHt)`.
    pub fn without_identity(&self) -> Self {
        Self {
            n: self.n,
            terms: self
                .terms
                .iter()
                .filter(|(_, p)| !p.is_identity())
                .copied()
                .collect(),
        }
    }

    /// `H ⊗ I_m` on `n + m` qubits.
    pub fn tensor_identity(&self, m: usize) -> Result<Self> {
        let id = PauliString::identity(m)?;
        let terms = self
            .terms
            .iter()
            .map(|(c, p)| p.tensor(&id).map(|q| (*c, q)))
            .collect::<Result<Vec<_>>>()?;
        Self::from_terms(self.n + m, terms)
    }

    pub fn to_dense(&self) -> Result<CMatrix> {
        let dim = check_dense(self.n)?;
        let mut m = CMatrix::zeros(dim, dim);
        for (c, p) in &self.terms {
            for b in 0..dim {
                let (r, amp) = p.apply_to_basis(b);
                m[(r, b)] += amp * *c;
            }
        }
        Ok(m)
    }

    /// Renders the text format read by [`PauliSum::from_str`], one term per line.
    pub fn to_text(&self) -> String {
        self.terms
            .iter()
            .map(|(c, p)| format!("{c:?} {}\n", p.letters()))
            .collect()
    }
}

/// Parses `<coefficient> <letters>` lines in file order without merging.
///
/// Blank lines and lines starting with `#` are skipped. Every term must have
/// the same number of letters.
pub fn parse_term_lines(text: &str) -> Result<Vec<(f64, PauliString)>> {
    let mut out: Vec<(f64, PauliString)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |msg: String| Error::Parse { line: line_no, msg };
        let mut fields = line.split_whitespace();
        let (Some(c), Some(letters), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(parse_err(format!(
                "expected `<coefficient> <letters>`, got {line:?}"
            )));
        };
        let coeff: f64 = c
            .parse()
            .map_err(|_| parse_err(format!("bad coefficient {c:?}")))?;
        if !coeff.is_finite() {
            return Err(parse_err(format!("non-finite coefficient {c:?}")));
        }
        let p: PauliString = letters.parse().map_err(|e| match e {
            Error::Parse { msg, .. } => parse_err(msg),
            other => parse_err(other.to_string()),
        })?;
        if !p.is_phase_free() {
            return Err(parse_err("phases belong in the coefficient".into()));
        }
        if let Some((_, first)) = out.first() {
            if first.n_qubits() != p.n_qubits() {
                return Err(parse_err(format!(
                    "term has {} letters, earlier terms have {}",
                    p.n_qubits(),
                    first.n_qubits()
                )));
            }
        }
        out.push((coeff, p));
    }
    Ok(out)
}

impl FromStr for PauliSum {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let terms = parse_term_lines(s)?;
        let Some((_, first)) = terms.first() else {
            return Err(Error::Parse {
                line: 0,
                msg: "no terms; qubit count is undetermined".into(),
            });
        };
        Self::from_terms(first.n_qubits(), terms)
    }
}
