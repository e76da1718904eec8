//! Row-major scaling kernels with fused marginal reductions.
//!
//! Row sums are always computed left to right within a row, so they do not
//! depend on the thread count. Column sums are accumulated per fixed block of
//! `ROW_BLOCK` rows and the block partials are combined by a fixed pairwise
//! tree when `deterministic` is set; otherwise rayon's adaptive fold/reduce
//! split is used.

use rayon::prelude::*;

pub(crate) const ROW_BLOCK: usize = 32;

pub(crate) fn row_sums(x: &[f64], cols: usize) -> Vec<f64> {
    x.par_chunks(cols).map(|row| row.iter().sum()).collect()
}

pub(crate) fn col_sums(x: &[f64], cols: usize, deterministic: bool) -> Vec<f64> {
    if deterministic {
        let partials: Vec<Vec<f64>> = x
            .par_chunks(cols * ROW_BLOCK)
            .map(|block| {
                let mut acc = vec![0.0; cols];
                for row in block.chunks(cols) {
                    add_into(&mut acc, row);
                }
                acc
            })
            .collect();
        tree_combine(partials, cols)
    } else {
        x.par_chunks(cols)
            .fold(
                || vec![0.0; cols],
                |mut acc, row| {
                    add_into(&mut acc, row);
                    acc
                },
            )
            .reduce(
                || vec![0.0; cols],
                |mut a, b| {
                    add_into(&mut a, &b);
                    a
                },
            )
    }
}

/// Multiplies row `i` by `factors[i]` and returns the new column sums.
pub(crate) fn scale_rows(x: &mut [f64], cols: usize, factors: &[f64], deterministic: bool) -> Vec<f64> {
    if deterministic {
        let partials: Vec<Vec<f64>> = x
            .par_chunks_mut(cols * ROW_BLOCK)
            .zip(factors.par_chunks(ROW_BLOCK))
            .map(|(block, f)| {
                let mut acc = vec![0.0; cols];
                for (row, &fi) in block.chunks_mut(cols).zip(f) {
                    for (v, s) in row.iter_mut().zip(acc.iter_mut()) {
                        *v *= fi;
                        *s += *v;
                    }
                }
                acc
            })
            .collect();
        tree_combine(partials, cols)
    } else {
        x.par_chunks_mut(cols)
            .zip(factors.par_iter())
            .fold(
                || vec![0.0; cols],
                |mut acc, (row, &fi)| {
                    for (v, s) in row.iter_mut().zip(acc.iter_mut()) {
                        *v *= fi;
                        *s += *v;
                    }
                    acc
                },
            )
            .reduce(
                || vec![0.0; cols],
                |mut a, b| {
                    add_into(&mut a, &b);
                    a
                },
            )
    }
}

/// Multiplies column `j` by `factors[j]` and returns the new row sums.
pub(crate) fn scale_cols(x: &mut [f64], cols: usize, factors: &[f64]) -> Vec<f64> {
    x.par_chunks_mut(cols)
        .map(|row| {
            let mut s = 0.0;
            for (v, &f) in row.iter_mut().zip(factors) {
                *v *= f;
                s += *v;
            }
            s
        })
        .collect()
}

fn add_into(acc: &mut [f64], row: &[f64]) {
    for (s, &v) in acc.iter_mut().zip(row) {
        *s += v;
    }
}

fn tree_combine(mut partials: Vec<Vec<f64>>, cols: usize) -> Vec<f64> {
    if partials.is_empty() {
        return vec![0.0; cols];
    }
    while partials.len() > 1 {
        let mut next = Vec::with_capacity(partials.len().div_ceil(2));
        let mut it = partials.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                add_into(&mut a, &b);
            }
            next.push(a);
        }
        partials = next;
    }
    partials.pop().unwrap()
}
