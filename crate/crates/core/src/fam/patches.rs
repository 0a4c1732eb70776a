use ndarray::{s, Array3};

use super::DEGENERATE_NORM;
use crate::error::{Error, Result};

/// One cell of a grid partition of a (C, H, W) feature map.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub row: usize,
    pub col: usize,
    pub values: Array3<f64>,
}

impl Patch {
    fn is_neighbour_of(&self, other: &Patch) -> bool {
        let (dr, dc) = (self.row.abs_diff(other.row), self.col.abs_diff(other.col));
        dr <= 1 && dc <= 1 && (dr, dc) != (0, 0)
    }
}

/// Splits `f` into `grid` x `grid` non-overlapping patches in row-major order.
pub fn split_patches(f: &Array3<f64>, grid: usize) -> Result<Vec<Patch>> {
    let (_, h, w) = f.dim();
    if grid == 0 || h % grid != 0 || w % grid != 0 {
        return Err(Error::IndivisibleGrid { height: h, width: w, grid });
    }
    let (ph, pw) = (h / grid, w / grid);
    let mut out = Vec::with_capacity(grid * grid);
    for row in 0..grid {
        for col in 0..grid {
            let values = f.slice(s![.., row * ph..(row + 1) * ph, col * pw..(col + 1) * pw]).to_owned();
            out.push(Patch { row, col, values });
        }
    }
    Ok(out)
}

/// Inverse of [`split_patches`]; patches may come in any order.
pub fn reassemble_patches(patches: &[Patch], grid: usize) -> Result<Array3<f64>> {
    let first = patches.first().ok_or_else(|| Error::Shape("no patches to reassemble".into()))?;
    let (c, ph, pw) = first.values.dim();
    if patches.len() != grid * grid {
        return Err(Error::Shape(format!("expected {} patches, got {}", grid * grid, patches.len())));
    }
    let mut out = Array3::zeros((c, ph * grid, pw * grid));
    for p in patches {
        if p.values.dim() != (c, ph, pw) || p.row >= grid || p.col >= grid {
            return Err(Error::Shape(format!("patch at ({}, {}) does not fit the grid", p.row, p.col)));
        }
        out.slice_mut(s![.., p.row * ph..(p.row + 1) * ph, p.col * pw..(p.col + 1) * pw]).assign(&p.values);
    }
    Ok(out)
}

/// Cosine similarity of two flattened vectors; 0 when either is (near) zero.
pub fn cosine_sim(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "cosine_sim: length mismatch");
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    let (na, nb) = (na.sqrt(), nb.sqrt());
    if na < DEGENERATE_NORM || nb < DEGENERATE_NORM {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

fn flat(p: &Patch) -> &[f64] {
    p.values.as_slice().expect("patches are stored contiguously")
}

/// Indices (into `patches`) of the `top_k` 8-connected neighbours of
/// `patches[anchor]` most similar to it. Ties go to the neighbour earlier in
/// row-major grid order. The result is sorted best-first.
pub fn select_positive_set(patches: &[Patch], anchor: usize, top_k: usize) -> Vec<usize> {
    let a = &patches[anchor];
    let mut cands: Vec<(usize, f64)> = patches
        .iter()
        .enumerate()
        .filter(|(_, p)| p.is_neighbour_of(a))
        .map(|(j, p)| (j, cosine_sim(flat(a), flat(p))))
        .collect();
    cands.sort_by(|&(i, si), &(j, sj)| {
        sj.total_cmp(&si).then_with(|| {
            let (pi, pj) = (&patches[i], &patches[j]);
            (pi.row, pi.col).cmp(&(pj.row, pj.col))
        })
    });
    cands.truncate(top_k);
    cands.into_iter().map(|(j, _)| j).collect()
}

/// Positive sets for every anchor of a row-major patch list.
pub(crate) fn positive_sets(patches: &[Patch], top_k: usize) -> Vec<Vec<usize>> {
    (0..patches.len()).map(|i| select_positive_set(patches, i, top_k)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Sorts every other patch that touches the anchor, independently of the
    // library's candidate filtering.
    fn brute_force(patches: &[Patch], anchor: usize, k: usize) -> Vec<usize> {
        let a = &patches[anchor];
        let va: Vec<f64> = a.values.iter().copied().collect();
        let mut all = Vec::new();
        for (j, p) in patches.iter().enumerate() {
            let dr = a.row as i64 - p.row as i64;
            let dc = a.col as i64 - p.col as i64;
            if j == anchor || dr.abs() > 1 || dc.abs() > 1 {
                continue;
            }
            let vb: Vec<f64> = p.values.iter().copied().collect();
            let dot: f64 = va.iter().zip(&vb).map(|(x, y)| x * y).sum();
            let na = va.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb = vb.iter().map(|x| x * x).sum::<f64>().sqrt();
            let s = if na < 1e-12 || nb < 1e-12 { 0.0 } else { (dot / (na * nb)).clamp(-1.0, 1.0) };
            all.push((s, p.row * 1000 + p.col, j));
        }
        all.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap().then(x.1.cmp(&y.1)));
        all.into_iter().take(k).map(|t| t.2).collect()
    }

    fn random_map(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> Array3<f64> {
        Array3::from_shape_simple_fn((c, h, w), || rng.random_range(-1.0..1.0))
    }

    #[test]
    fn split_examples() {
        let f = Array3::from_shape_fn((2, 8, 8), |(c, i, j)| (c * 64 + i * 8 + j) as f64);
        let p = split_patches(&f, 8).unwrap();
        assert_eq!(p.len(), 64);
        assert!(p.iter().all(|q| q.values.dim() == (2, 1, 1)));
        assert_eq!((p[9].row, p[9].col), (1, 1));
        let one = split_patches(&f, 1).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].values, f);
        assert!(matches!(split_patches(&f, 3), Err(Error::IndivisibleGrid { grid: 3, .. })));
        let mut shuffled = split_patches(&f, 4).unwrap();
        shuffled.reverse();
        assert_eq!(reassemble_patches(&shuffled, 4).unwrap(), f);
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine_sim(&[3.0, -1.0], &[3.0, -1.0]) - 1.0).abs() < 1e-15);
        assert_eq!(cosine_sim(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
        assert!((cosine_sim(&[1.0, 0.0], &[1.0, 1.0]) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(cosine_sim(&[0.0, 0.0], &[1.0, 1.0]), 0.0);
    }

    #[test]
    fn identical_patches_tie_break_by_index() {
        let f = Array3::from_elem((1, 2, 2), 1.0);
        let p = split_patches(&f, 2).unwrap();
        assert_eq!(select_positive_set(&p, 0, 4), vec![1, 2, 3]);
        assert_eq!(select_positive_set(&p, 3, 2), vec![0, 1]);
    }

    #[test]
    fn zero_anchor_takes_first_neighbours() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut f = random_map(&mut rng, 2, 4, 4);
        f.slice_mut(s![.., 1..2, 1..2]).fill(0.0);
        let p = split_patches(&f, 4).unwrap();
        assert_eq!(select_positive_set(&p, 5, 4), vec![0, 1, 2, 4]);
    }

    #[test]
    fn pool_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = split_patches(&random_map(&mut rng, 1, 4, 4), 4).unwrap();
        assert_eq!(select_positive_set(&p, 0, 8).len(), 3);
        assert_eq!(select_positive_set(&p, 1, 8).len(), 5);
        assert_eq!(select_positive_set(&p, 5, 8).len(), 8);
        assert!(!select_positive_set(&p, 5, 8).contains(&5));
    }

    #[test]
    fn matches_brute_force_on_random_grids() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..1000 {
            let g = rng.random_range(4..=8);
            let c = rng.random_range(1..=3);
            let patch = rng.random_range(1..=2);
            let f = random_map(&mut rng, c, g * patch, g * patch);
            let p = split_patches(&f, g).unwrap();
            let anchor = rng.random_range(0..p.len());
            assert_eq!(select_positive_set(&p, anchor, 4), brute_force(&p, anchor, 4));
        }
    }

    proptest! {
        #[test]
        fn selection_ignores_storage_order(seed in 0u64..1000, rot in 0usize..16) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = random_map(&mut rng, 2, 4, 4);
            let p = split_patches(&f, 4).unwrap();
            let mut q = p.clone();
            q.rotate_left(rot);
            for anchor in 0..16 {
                let moved = (anchor + 16 - rot) % 16;
                let a: Vec<(usize, usize)> = select_positive_set(&p, anchor, 4).iter().map(|&j| (p[j].row, p[j].col)).collect();
                let b: Vec<(usize, usize)> = select_positive_set(&q, moved, 4).iter().map(|&j| (q[j].row, q[j].col)).collect();
                prop_assert_eq!(a, b);
            }
        }
    }
}
