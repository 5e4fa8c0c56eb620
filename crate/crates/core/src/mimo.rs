//! Virtual-MIMO payoff division.
//!
//! UUs sharing a sub-band form a coalition whose normalized gain matrix `G`
//! has entry `(j, k) = g'[m][j][k] / sigma[m][k]`. The eigenvalues of `GᵀG`
//! are handed out to members by the rank of their direct gains `g'[m][k][k]`.

use crate::channel::ChannelRealization;
use crate::error::{Error, Result};

/// Relative off-diagonal norm at which the Jacobi sweeps stop.
pub const JACOBI_TOLERANCE: f64 = 1e-10;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Members of one sub-band's coalition, kept sorted by UU index.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Support {
    pub subband: usize,
    members: Vec<usize>,
}

impl Support {
    pub fn new(subband: usize, members: impl IntoIterator<Item = usize>) -> Self {
        let mut members: Vec<usize> = members.into_iter().collect();
        members.sort_unstable();
        members.dedup();
        Self { subband, members }
    }

    pub fn from_mask(subband: usize, mask: u64) -> Self {
        Self {
            subband,
            members: (0..64).filter(|k| mask >> k & 1 == 1).collect(),
        }
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn mask(&self) -> u64 {
        self.members.iter().fold(0, |acc, k| acc | 1 << k)
    }
}

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Self {
            rows: r,
            cols: c,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn transpose_mul_self(&self) -> Matrix {
        let n = self.cols;
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let s: f64 = (0..self.rows).map(|r| self[(r, i)] * self[(r, j)]).sum();
                out[(i, j)] = s;
                out[(j, i)] = s;
            }
        }
        out
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

/// `λ[k][m]` for every UU and sub-band; zero where `k` is not a member.
#[derive(Clone, Debug, PartialEq)]
pub struct PayoffDivision {
    num_uus: usize,
    num_subbands: usize,
    lambda: Vec<f64>,
}

impl PayoffDivision {
    pub fn zeros(num_uus: usize, num_subbands: usize) -> Self {
        Self {
            num_uus,
            num_subbands,
            lambda: vec![0.0; num_uus * num_subbands],
        }
    }

    #[inline]
    pub fn get(&self, k: usize, m: usize) -> f64 {
        self.lambda[k * self.num_subbands + m]
    }

    #[inline]
    pub fn set(&mut self, k: usize, m: usize, value: f64) {
        self.lambda[k * self.num_subbands + m] = value;
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.lambda[k * self.num_subbands..(k + 1) * self.num_subbands]
    }

    pub fn column(&self, m: usize) -> Vec<f64> {
        (0..self.num_uus).map(|k| self.get(k, m)).collect()
    }

    pub fn set_column(&mut self, m: usize, assignment: &[(usize, f64)]) {
        for k in 0..self.num_uus {
            self.set(k, m, 0.0);
        }
        for &(k, l) in assignment {
            self.set(k, m, l);
        }
    }

    pub fn num_uus(&self) -> usize {
        self.num_uus
    }

    pub fn num_subbands(&self) -> usize {
        self.num_subbands
    }

    pub fn max_entry(&self) -> f64 {
        self.lambda.iter().copied().fold(0.0, f64::max)
    }
}

/// Normalized gain matrix of a coalition, rows and columns by ascending UU index.
pub fn build_gain_matrix(real: &ChannelRealization, support: &Support) -> Result<Matrix> {
    if support.is_empty() {
        return Err(Error::EmptyCoalition);
    }
    let members = support.members();
    let n = members.len();
    let m = support.subband;
    let mut g = Matrix::zeros(n, n);
    for (r, &j) in members.iter().enumerate() {
        for (c, &k) in members.iter().enumerate() {
            g[(r, c)] = real.g(m, j, k);
        }
    }
    Ok(g)
}

/// Eigenvalues of `GᵀG`, clamped at zero and sorted descending.
pub fn gram_eigenvalues(g: &Matrix) -> Result<Vec<f64>> {
    if !g.is_square() {
        return Err(Error::NotSquare {
            rows: g.rows(),
            cols: g.cols(),
        });
    }
    let mut eigs = symmetric_eigenvalues(&g.transpose_mul_self());
    for e in &mut eigs {
        *e = e.max(0.0);
    }
    eigs.sort_by(|a, b| b.total_cmp(a));
    Ok(eigs)
}

/// Cyclic Jacobi rotations on a symmetric matrix; returns the unsorted diagonal.
pub fn symmetric_eigenvalues(a: &Matrix) -> Vec<f64> {
    debug_assert!(a.is_square());
    let n = a.rows();
    let mut a = a.clone();
    let fro = a.frobenius_norm();
    if n <= 1 || fro == 0.0 {
        return (0..n).map(|i| a[(i, i)]).collect();
    }

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|p| (0..n).filter(move |&q| q != p).map(move |q| (p, q)))
            .map(|(p, q)| a[(p, q)] * a[(p, q)])
            .sum::<f64>()
            .sqrt();
        if off < JACOBI_TOLERANCE * fro {
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut a, p, q, c, s);
            }
        }
    }
    (0..n).map(|i| a[(i, i)]).collect()
}

// A <- Jᵀ A J with J the (p, q) plane rotation.
fn rotate(a: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let n = a.rows();
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = c * akp - s * akq;
        a[(k, q)] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = c * apk - s * aqk;
        a[(q, k)] = s * apk + c * aqk;
    }
}

/// Hands the ascending eigenvalues to members ranked by ascending direct gain.
///
/// Ties in gain go to the lower UU index first. Returns `(uu, lambda)` pairs
/// in member order.
pub fn assign_payoff_division(
    eigs: &[f64],
    support: &Support,
    real: &ChannelRealization,
) -> Vec<(usize, f64)> {
    let members = support.members();
    assert!(
        eigs.len() >= members.len(),
        "{} eigenvalues for {} members",
        eigs.len(),
        members.len()
    );
    let m = support.subband;
    let mut ascending = eigs.to_vec();
    ascending.sort_by(f64::total_cmp);

    let mut ranked: Vec<usize> = members.to_vec();
    ranked.sort_by(|&a, &b| {
        real.g_prime(m, a, a)
            .total_cmp(&real.g_prime(m, b, b))
            .then(a.cmp(&b))
    });

    let mut out: Vec<(usize, f64)> = ranked
        .iter()
        .zip(&ascending)
        .map(|(&k, &l)| (k, l))
        .collect();
    out.sort_by_key(|&(k, _)| k);
    out
}

/// Gain matrix, eigenvalues and rank assignment in one go.
pub fn coalition_lambdas(real: &ChannelRealization, support: &Support) -> Result<Vec<(usize, f64)>> {
    let g = build_gain_matrix(real, support)?;
    let eigs = gram_eigenvalues(&g)?;
    Ok(assign_payoff_division(&eigs, support, real))
}
