use ndarray::{Array1, Array2};

use super::{Coupling, GwResult};
use crate::graph::MmSpace;
use crate::{Error, Result};

/// Largest instance the permutation oracle accepts.
pub const EXACT_MAX_SIZE: usize = 8;

/// Exact squared-loss GW between two equal-size spaces with uniform
/// measures, by enumerating every permutation. The optimal coupling of such
/// an instance is attained at a permutation matrix scaled by `1/n`.
///
/// Permutations are visited in lexicographic order starting from the
/// identity and only strict improvements replace the incumbent, so the
/// identity wins among tied optima.
pub fn exact_gw(a: &MmSpace, b: &MmSpace) -> Result<GwResult> {
    let n = a.size();
    if b.size() != n {
        return Err(Error::Unsupported(format!(
            "exact oracle needs equal sizes, got {n} and {}",
            b.size()
        )));
    }
    if n > EXACT_MAX_SIZE {
        return Err(Error::Unsupported(format!(
            "exact oracle is limited to {EXACT_MAX_SIZE} points, got {n}"
        )));
    }
    if !a.is_uniform() || !b.is_uniform() {
        return Err(Error::Unsupported("exact oracle needs uniform measures".into()));
    }
    let (sa, sb) = (a.structure(), b.structure());
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    let mut best_perm = perm.clone();
    loop {
        let mut total = 0.0;
        for i in 0..n {
            for k in 0..n {
                let d = sa[[i, k]] - sb[[perm[i], perm[k]]];
                total += d * d;
            }
            if total >= best * (n * n) as f64 {
                break;
            }
        }
        let cost = total / (n * n) as f64;
        if cost < best {
            best = cost;
            best_perm.copy_from_slice(&perm);
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    let mut plan = Array2::zeros((n, n));
    for (i, &j) in best_perm.iter().enumerate() {
        plan[[i, j]] = 1.0 / n as f64;
    }
    let u = Array1::from_elem(n, 1.0 / n as f64);
    Ok(GwResult {
        cost: best,
        coupling: Coupling::new_unchecked(plan, u.clone(), u),
        converged: true,
        iterations: 0,
    })
}

/// Advances to the next lexicographic permutation; false after the last.
fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else {
        return false;
    };
    let j = (i..p.len()).rev().find(|&j| p[j] > p[i - 1]).expect("pivot exists");
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{to_mm_space, Graph};

    fn uniform_of(g: &Graph) -> MmSpace {
        MmSpace::uniform(g.adjacency()).unwrap()
    }

    #[test]
    fn permutations_are_enumerated_once() {
        let mut p = vec![0, 1, 2, 3];
        let mut count = 1;
        while next_permutation(&mut p) {
            count += 1;
        }
        assert_eq!(count, 24);
    }

    #[test]
    fn k3_examples() {
        let k3 = Graph::new(3, [(0, 1), (1, 2), (0, 2)], None, None, "k3").unwrap();
        let p3 = Graph::new(3, [(0, 1), (1, 2)], None, None, "p3").unwrap();
        let (a, b) = (uniform_of(&k3), uniform_of(&p3));
        assert_eq!(exact_gw(&a, &a).unwrap().cost, 0.0);
        assert_eq!(exact_gw(&a, &b).unwrap().cost, 2.0 / 9.0);
    }

    #[test]
    fn self_distance_picks_identity() {
        let g = Graph::new(5, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)], None, None, "c5").unwrap();
        let a = uniform_of(&g);
        let r = exact_gw(&a, &a).unwrap();
        assert_eq!(r.cost, 0.0);
        assert_eq!(r.coupling.plan(), &(Array2::<f64>::eye(5) / 5.0));
    }

    #[test]
    fn unsupported_instances() {
        let p3 = Graph::new(3, [(0, 1), (1, 2)], None, None, "p3").unwrap();
        let degree = to_mm_space(&p3).unwrap();
        assert!(matches!(exact_gw(&degree, &degree), Err(Error::Unsupported(_))));
        let big = MmSpace::uniform(Array2::zeros((9, 9))).unwrap();
        assert!(matches!(exact_gw(&big, &big), Err(Error::Unsupported(_))));
        let small = MmSpace::uniform(Array2::zeros((2, 2))).unwrap();
        let other = MmSpace::uniform(Array2::zeros((3, 3))).unwrap();
        assert!(matches!(exact_gw(&small, &other), Err(Error::Unsupported(_))));
    }
}
