//! Dense row-major matrices and a partial-pivoting linear solve, sized for
//! mode counts in the tens.

use alloc::vec;
use alloc::vec::Vec;

/// Square matrix stored as a list of rows.
pub type Matrix = Vec<Vec<f64>>;

/// Solves `a · x = b` by Gaussian elimination with partial pivoting.
///
/// Returns `None` when a pivot falls below `1e-14` times the matrix scale.
pub fn solve(mut a: Matrix, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-14 * scale {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    Some(x)
}

/// Row vector times matrix: `v · m`.
pub fn vec_mat(v: &[f64], m: &Matrix) -> Vec<f64> {
    let n = m.first().map_or(0, Vec::len);
    (0..n).map(|j| v.iter().zip(m).map(|(vi, row)| vi * row[j]).sum()).collect()
}

/// True when every state reaches every other along positive entries.
pub fn strongly_connected(m: &Matrix) -> bool {
    let n = m.len();
    if n == 0 {
        return false;
    }
    let reach = |transpose: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let w = if transpose { m[j][i] } else { m[i][j] };
                if i != j && w > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(false) && reach(true)
}
