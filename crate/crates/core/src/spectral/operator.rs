use super::grid::{GridSpec, NO_NODE};

/// Fourth-order finite-difference `-lap` restricted to interior unknowns.
///
/// Each axis uses `(u[-2] - 16 u[-1] + 30 u[0] - 16 u[1] + u[2]) / (12 dx^2)`.
/// Neighbours beyond a straight wall are odd images (which fold back onto the
/// centre node and only shift the diagonal); neighbours outside the curved
/// boundary are zero. The matrix is symmetric positive definite.
#[derive(Clone, Debug)]
pub struct Laplacian {
    diag: Vec<f64>,
    /// Neighbour unknowns: `[x-1, x+1, y-1, y+1, x-2, x+2, y-2, y+2]`.
    nbr: Vec<[u32; 8]>,
    near: f64,
    far: f64,
}

impl Laplacian {
    pub fn new(grid: &GridSpec) -> Self {
        let n = grid.n_interior();
        let inv = 1.0 / (12.0 * grid.dx * grid.dx);
        let near = -16.0 * inv;
        let far = inv;
        let mut diag = vec![0.0; n];
        let mut nbr = vec![[NO_NODE; 8]; n];
        const OFFSETS: [(i64, i64); 8] =
            [(-1, 0), (1, 0), (0, -1), (0, 1), (-2, 0), (2, 0), (0, -2), (0, 2)];
        for k in 0..n {
            let (i, j) = grid.interior_node(k);
            let (i, j) = (i as i64, j as i64);
            let mut d = 60.0 * inv;
            for (slot, (di, dj)) in OFFSETS.iter().enumerate() {
                let (qi, qj) = (i + di, j + dj);
                if let Some(q) = grid.index_of(qi, qj) {
                    nbr[k][slot] = q as u32;
                } else if slot >= 4 {
                    // A far neighbour beyond a straight wall through the
                    // midpoint node is the odd image of this node.
                    if let Some((sign, q)) = grid.extended_sign_index(qi, qj, 1) {
                        debug_assert_eq!(q, k);
                        d += sign * far;
                    }
                }
            }
            diag[k] = d;
        }
        Self { diag, nbr, near, far }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let (near, far) = (self.near, self.far);
        let get = |q: u32| if q == NO_NODE { 0.0 } else { x[q as usize] };
        for (k, yk) in y.iter_mut().enumerate() {
            let nb = &self.nbr[k];
            let s1 = get(nb[0]) + get(nb[1]) + get(nb[2]) + get(nb[3]);
            let s2 = get(nb[4]) + get(nb[5]) + get(nb[6]) + get(nb[7]);
            *yk = self.diag[k] * x[k] + near * s1 + far * s2;
        }
    }

    /// `x^T A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let mut y = vec![0.0; x.len()];
        self.apply(x, &mut y);
        x.iter().zip(&y).map(|(a, b)| a * b).sum()
    }

    /// Gershgorin upper bound on the spectrum.
    pub fn upper_bound(&self) -> f64 {
        self.diag
            .iter()
            .zip(&self.nbr)
            .map(|(d, nb)| {
                let off: f64 = nb
                    .iter()
                    .enumerate()
                    .filter(|(_, q)| **q != NO_NODE)
                    .map(|(slot, _)| if slot < 4 { self.near.abs() } else { self.far.abs() })
                    .sum();
                d + off
            })
            .fold(0.0, f64::max)
    }

    /// Nonzero entries `(row, col, value)` with `col < row`.
    pub(crate) fn lower_entries(&self, k: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.nbr[k].iter().enumerate().filter_map(move |(slot, &q)| {
            if q == NO_NODE || (q as usize) >= k {
                return None;
            }
            Some((q as usize, if slot < 4 { self.near } else { self.far }))
        })
    }

    pub(crate) fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    /// Dense copy, for small problems and tests.
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.dim();
        let mut m = nalgebra::DMatrix::zeros(n, n);
        for k in 0..n {
            m[(k, k)] = self.diag[k];
            for (slot, &q) in self.nbr[k].iter().enumerate() {
                if q != NO_NODE {
                    m[(k, q as usize)] = if slot < 4 { self.near } else { self.far };
                }
            }
        }
        m
    }
}

/// Number of eigenvalues of `A` strictly below `shift`, by Sylvester's law of
/// inertia on a banded `L D L^T` factorization of `A - shift I`.
pub fn count_below(op: &Laplacian, shift: f64) -> crate::Result<usize> {
    let n = op.dim();
    if n == 0 {
        return Ok(0);
    }
    let mut band = 0;
    for k in 0..n {
        for (q, _) in op.lower_entries(k) {
            band = band.max(k - q);
        }
    }
    let w = band + 1;
    // Row k stores columns k - band ..= k at offsets 0 ..= band.
    let mut l = vec![0.0; n * w];
    for k in 0..n {
        l[k * w + band] = op.diagonal()[k] - shift;
        for (q, v) in op.lower_entries(k) {
            l[k * w + band - (k - q)] = v;
        }
    }
    let scale = op.upper_bound().max(shift.abs()).max(1.0);
    let mut d = vec![0.0; n];
    let mut wrow = vec![0.0; w];
    let mut negatives = 0;
    for i in 0..n {
        let lo = i.saturating_sub(band);
        // wrow[c] = L[i][lo + c] * d[lo + c] for already reduced columns.
        for j in lo..=i {
            let jlo = j.saturating_sub(band).max(lo);
            let mut s = l[i * w + band - (i - j)];
            let row_j = j * w + band - j;
            for c in jlo..j {
                s -= wrow[c - lo] * l[row_j + c];
            }
            if j < i {
                let lij = s / d[j];
                l[i * w + band - (i - j)] = lij;
                wrow[j - lo] = lij * d[j];
            } else {
                if s.abs() < 1e-14 * scale {
                    return Err(crate::Error::SingularShift { shift });
                }
                d[i] = s;
                if s < 0.0 {
                    negatives += 1;
                }
            }
        }
    }
    Ok(negatives)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Domain, Rectangle};

    #[test]
    fn symmetric_and_positive() {
        let g = GridSpec::with_cells(Domain::default().into(), 8);
        let op = Laplacian::new(&g);
        let m = op.to_dense();
        assert_eq!(m, m.transpose());
        let eig = m.symmetric_eigenvalues();
        assert!(eig.iter().all(|&e| e > 0.0));
        assert!(eig.iter().all(|&e| e <= op.upper_bound() * (1.0 + 1e-12)));
    }

    #[test]
    fn inertia_matches_dense_count() {
        let g = GridSpec::with_cells(Domain::default().into(), 9);
        let op = Laplacian::new(&g);
        let eig = op.to_dense().symmetric_eigenvalues();
        for shift in [5.0, 60.0, 333.3, 1000.0, 2500.0] {
            let want = eig.iter().filter(|&&e| e < shift).count();
            assert_eq!(count_below(&op, shift).unwrap(), want, "shift {shift}");
        }
    }

    #[test]
    fn square_is_exact_for_sines() {
        // Odd reflection makes discrete sines exact eigenvectors with the
        // fourth-order symbol.
        let n = 16;
        let g = GridSpec::with_cells(Rectangle::unit_square().into(), n);
        let op = Laplacian::new(&g);
        let (m1, m2) = (2.0, 3.0);
        let x: Vec<f64> = g
            .interior_points()
            .map(|p| (m1 * std::f64::consts::PI * p.x).sin() * (m2 * std::f64::consts::PI * p.y).sin())
            .collect();
        let mut y = vec![0.0; x.len()];
        op.apply(&x, &mut y);
        let h = g.dx;
        let symbol = |m: f64| {
            let c = (m * std::f64::consts::PI * h).cos();
            (7.0 - 8.0 * c + c * c) / (3.0 * h * h)
        };
        let lambda = symbol(m1) + symbol(m2);
        for (a, b) in x.iter().zip(&y) {
            assert!((lambda * a - b).abs() < 1e-9 * lambda);
        }
    }
}
