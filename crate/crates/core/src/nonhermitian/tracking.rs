use serde::Serialize;

use crate::matrix::{inner, norm2};

use super::EigenSystem;

/// Overlap margin below which an assignment is reported as ambiguous.
pub const AMBIGUITY_MARGIN: f64 = 0.1;

/// Mode labels along a sweep. `labels[i][l]` is the eigen index carrying label
/// `l` at point `i`; point 0 uses the identity labeling.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Tracking {
    pub labels: Vec<Vec<usize>>,
    /// `(point, label)` steps where the best and second-best overlaps differed
    /// by less than [`AMBIGUITY_MARGIN`]. The label is still assigned.
    pub ambiguous: Vec<(usize, usize)>,
}

/// Follows eigenmodes across consecutive sweep points by greedy best overlap
/// of normalized right eigenvectors.
pub fn track_modes(sweep: &[EigenSystem]) -> Tracking {
    let mut labels: Vec<Vec<usize>> = Vec::with_capacity(sweep.len());
    let mut ambiguous = Vec::new();
    let Some(first) = sweep.first() else {
        return Tracking { labels, ambiguous };
    };
    labels.push((0..first.len()).collect());

    for (step, pair) in sweep.windows(2).enumerate() {
        let (prev, next) = (&pair[0], &pair[1]);
        let n = prev.len().min(next.len());
        let overlap: Vec<Vec<f64>> = (0..prev.len())
            .map(|a| {
                (0..next.len())
                    .map(|b| {
                        let (u, v) = (&prev.modes[a].right, &next.modes[b].right);
                        inner(u, v).norm() / (norm2(u) * norm2(v))
                    })
                    .collect()
            })
            .collect();

        let prev_labels = &labels[step];
        let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
        for a in 0..prev.len() {
            for b in 0..next.len() {
                candidates.push((overlap[a][b], a, b));
            }
        }
        candidates.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
        let mut next_of_prev = vec![usize::MAX; prev.len()];
        let mut taken = vec![false; next.len()];
        let mut done = 0;
        for (_, a, b) in candidates {
            if done == n {
                break;
            }
            if next_of_prev[a] == usize::MAX && !taken[b] {
                next_of_prev[a] = b;
                taken[b] = true;
                done += 1;
            }
        }

        let mut row = vec![usize::MAX; prev_labels.len()];
        for (label, &a) in prev_labels.iter().enumerate() {
            if a >= prev.len() {
                continue;
            }
            let b = next_of_prev[a];
            row[label] = b;
            if b == usize::MAX {
                continue;
            }
            let mut sorted: Vec<f64> = overlap[a].clone();
            sorted.sort_by(|x, y| y.total_cmp(x));
            if sorted.len() > 1 && sorted[0] - sorted[1] < AMBIGUITY_MARGIN {
                ambiguous.push((step + 1, label));
            }
        }
        labels.push(row);
    }
    Tracking { labels, ambiguous }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{ComplexMatrix, C64};
    use crate::nonhermitian::eig_biorthogonal;

    fn diag(a: f64, b: f64) -> EigenSystem {
        let h = ComplexMatrix::from_diagonal(&[C64::new(a, 0.0), C64::new(b, -0.01)]);
        eig_biorthogonal(&h).unwrap()
    }

    #[test]
    fn constant_sweep_keeps_identity() {
        let sweep: Vec<_> = (0..5).map(|_| diag(1.0, 2.0)).collect();
        let t = track_modes(&sweep);
        assert!(t.labels.iter().all(|l| l == &vec![0, 1]));
        assert!(t.ambiguous.is_empty());
    }

    #[test]
    fn uncoupled_crossing_follows_diagonal_entries() {
        // bare mode 0 ramps upward through mode 1 at 1.5
        let sweep: Vec<_> = (0..11).map(|i| diag(1.0 + 0.1 * i as f64, 1.5)).collect();
        let t = track_modes(&sweep);
        for (i, es) in sweep.iter().enumerate() {
            let idx = t.labels[i][0];
            assert!((es.modes[idx].right[0].norm() - 1.0).abs() < 1e-12, "point {i}");
        }
    }

    #[test]
    fn empty_sweep() {
        assert!(track_modes(&[]).labels.is_empty());
    }
}
