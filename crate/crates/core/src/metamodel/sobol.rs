//! Sobol low-discrepancy sequence (up to 10 dimensions).
//!
//! Direction numbers are the first rows of the Joe-Kuo `new-joe-kuo-6.21201`
//! table; points are generated in Gray-code order and the initial all-zero
//! point is skipped, so the first point is `0.5` in every dimension.

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 10;
const BITS: usize = 32;

/// `(degree s, coefficient a, initial m_1..m_s)` for dimensions 2..=10.
const DIRECTIONS: [(u32, u32, &[u32]); MAX_DIM - 1] = [
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
    (5, 4, &[1, 1, 5, 5, 5]),
    (5, 7, &[1, 1, 7, 11, 19]),
];

fn direction_vectors(dim: usize) -> [u32; BITS] {
    let mut v = [0u32; BITS];
    if dim == 0 {
        for (k, vk) in v.iter_mut().enumerate() {
            *vk = 1 << (BITS - 1 - k);
        }
        return v;
    }
    let (s, a, m) = DIRECTIONS[dim - 1];
    let s = s as usize;
    for k in 0..s {
        v[k] = m[k] << (BITS - 1 - k);
    }
    for k in s..BITS {
        let mut x = v[k - s] ^ (v[k - s] >> s);
        for j in 1..s {
            if (a >> (s - 1 - j)) & 1 == 1 {
                x ^= v[k - j];
            }
        }
        v[k] = x;
    }
    v
}

/// First `n` points of the `dim`-dimensional unit-cube sequence.
pub fn sobol_unit(n: usize, dim: usize) -> Result<Vec<Vec<f64>>> {
    if dim == 0 || dim > MAX_DIM {
        return Err(Error::Domain(format!("Sobol dimension must be in 1..={MAX_DIM}, got {dim}")));
    }
    if n as u64 >= 1u64 << BITS {
        return Err(Error::Domain(format!("at most 2^{BITS} - 1 Sobol points, requested {n}")));
    }
    let dirs: Vec<[u32; BITS]> = (0..dim).map(direction_vectors).collect();
    let mut state = vec![0u32; dim];
    let scale = 1.0 / (1u64 << BITS) as f64;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // Point i+1 differs from point i in the direction of the lowest zero bit of i.
        let c = (!(i as u64)).trailing_zeros() as usize;
        for (x, v) in state.iter_mut().zip(&dirs) {
            *x ^= v[c];
        }
        out.push(state.iter().map(|&x| f64::from(x) * scale).collect());
    }
    Ok(out)
}
