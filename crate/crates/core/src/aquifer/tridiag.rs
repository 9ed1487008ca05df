use super::AquiferError;

/// Smallest pivot magnitude accepted by [`thomas_solve`].
pub const MIN_PIVOT: f64 = 1e-14;

/// Tridiagonal linear system. `lower[i]` couples row `i + 1` to unknown `i`,
/// `upper[i]` couples row `i` to unknown `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalSystem {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl TridiagonalSystem {
    pub fn new(
        lower: Vec<f64>,
        diag: Vec<f64>,
        upper: Vec<f64>,
        rhs: Vec<f64>,
    ) -> Result<Self, AquiferError> {
        let n = diag.len();
        if n == 0 || rhs.len() != n || lower.len() + 1 != n || upper.len() + 1 != n {
            return Err(AquiferError::InvalidSystem(format!(
                "diag {n}, rhs {}, lower {}, upper {}",
                rhs.len(),
                lower.len(),
                upper.len()
            )));
        }
        Ok(Self {
            lower,
            diag,
            upper,
            rhs,
        })
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// min over rows of |diag| − (|lower| + |upper|).
    pub fn dominance_margin(&self) -> f64 {
        (0..self.len())
            .map(|i| {
                let l = if i > 0 { self.lower[i - 1].abs() } else { 0.0 };
                let u = if i + 1 < self.len() {
                    self.upper[i].abs()
                } else {
                    0.0
                };
                self.diag[i].abs() - l - u
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// A·x − rhs.
    pub fn residual(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut r = self.diag[i] * x[i] - self.rhs[i];
                if i > 0 {
                    r += self.lower[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    r += self.upper[i] * x[i + 1];
                }
                r
            })
            .collect()
    }
}

/// Thomas algorithm (Gaussian elimination without pivoting).
pub fn thomas_solve(sys: &TridiagonalSystem) -> Result<Vec<f64>, AquiferError> {
    let n = sys.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];

    let mut pivot = sys.diag[0];
    if pivot.abs() < MIN_PIVOT {
        return Err(AquiferError::Breakdown {
            step: None,
            row: 0,
            pivot,
        });
    }
    if n > 1 {
        c[0] = sys.upper[0] / pivot;
    }
    d[0] = sys.rhs[0] / pivot;

    for i in 1..n {
        pivot = sys.diag[i] - sys.lower[i - 1] * c[i - 1];
        if pivot.abs() < MIN_PIVOT || !pivot.is_finite() {
            return Err(AquiferError::Breakdown {
                step: None,
                row: i,
                pivot,
            });
        }
        if i + 1 < n {
            c[i] = sys.upper[i] / pivot;
        }
        d[i] = (sys.rhs[i] - sys.lower[i - 1] * d[i - 1]) / pivot;
    }

    let mut x = d;
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Ok(x)
}
