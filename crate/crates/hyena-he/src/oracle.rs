//! Independent plaintext ground truth for the homomorphic pipeline.
//!
//! Everything here is deliberately naive and self-contained: no imports from
//! the ring or cipher modules, so a shared bug cannot hide in both sides of
//! an equivalence test.

/// Plain integer tensor with channel-major layout, values mod p.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlainTensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub values: Vec<u64>,
}

impl PlainTensor {
    pub fn zero(channels: usize, height: usize, width: usize) -> Self {
        PlainTensor { channels, height, width, values: vec![0; channels * height * width] }
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> u64 {
        self.values[(c * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: u64) {
        self.values[(c * self.height + y) * self.width + x] = v;
    }
}

/// Plain convolution kernel, values mod p, indexed [out][in][ky][kx].
#[derive(Clone, Debug)]
pub struct PlainKernel {
    pub c_out: usize,
    pub c_in: usize,
    pub f: usize,
    pub values: Vec<u64>,
}

impl PlainKernel {
    pub fn get(&self, o: usize, i: usize, ky: usize, kx: usize) -> u64 {
        self.values[((o * self.c_in + i) * self.f + ky) * self.f + kx]
    }
}

/// Stride-1, same-size convolution mod p with zero extension outside the map.
///
/// out[o][y][x] = sum_{i,ky,kx} k[o][i][ky][kx] * in[i][y+ky-f/2][x+kx-f/2]
pub fn conv_reference(input: &PlainTensor, kernel: &PlainKernel, p: u64) -> PlainTensor {
    assert_eq!(input.channels, kernel.c_in);
    let f = kernel.f;
    let half = f / 2;
    let mut out = PlainTensor::zero(kernel.c_out, input.height, input.width);
    for o in 0..kernel.c_out {
        for y in 0..input.height {
            for x in 0..input.width {
                let mut acc: u128 = 0;
                for i in 0..kernel.c_in {
                    for ky in 0..f {
                        for kx in 0..f {
                            let sy = y as isize + ky as isize - half as isize;
                            let sx = x as isize + kx as isize - half as isize;
                            if sy < 0
                                || sx < 0
                                || sy >= input.height as isize
                                || sx >= input.width as isize
                            {
                                continue;
                            }
                            let v = input.get(i, sy as usize, sx as usize);
                            acc += kernel.get(o, i, ky, kx) as u128 * v as u128;
                            acc %= p as u128;
                        }
                    }
                }
                out.set(o, y, x, acc as u64);
            }
        }
    }
    out
}

/// Schoolbook negacyclic product mod m (test scale, O(n^2)).
pub fn polymul_reference(a: &[u64], b: &[u64], n: usize, m: u64) -> Vec<u64> {
    assert_eq!(a.len(), n);
    assert_eq!(b.len(), n);
    let mut out = vec![0i128; n];
    for i in 0..n {
        if a[i] == 0 {
            continue;
        }
        for j in 0..n {
            let prod = (a[i] as i128 * b[j] as i128) % m as i128;
            let k = i + j;
            if k < n {
                out[k] += prod;
            } else {
                out[k - n] -= prod;
            }
        }
    }
    out.iter()
        .map(|&v| {
            let r = v % m as i128;
            ((r + m as i128) % m as i128) as u64
        })
        .collect()
}

/// Solve for the polynomial taking prescribed values at distinct points mod
/// a prime, by Gaussian elimination on the Vandermonde system. Test scale.
pub fn solve_vandermonde_encode(points: &[u64], values: &[u64], p: u64) -> Vec<u64> {
    let n = points.len();
    assert_eq!(values.len(), n);
    // build [V | values]
    let mut mat = vec![vec![0u64; n + 1]; n];
    for (r, &pt) in points.iter().enumerate() {
        let mut acc = 1u64;
        for c in 0..n {
            mat[r][c] = acc;
            acc = ((acc as u128 * pt as u128) % p as u128) as u64;
        }
        mat[r][n] = values[r] % p;
    }
    let inv = |a: u64| -> u64 {
        // p prime
        let mut acc = 1u64;
        let mut base = a % p;
        let mut e = p - 2;
        while e > 0 {
            if e & 1 == 1 {
                acc = ((acc as u128 * base as u128) % p as u128) as u64;
            }
            base = ((base as u128 * base as u128) % p as u128) as u64;
            e >>= 1;
        }
        acc
    };
    for col in 0..n {
        let pivot = (col..n).find(|&r| mat[r][col] != 0).expect("singular system");
        mat.swap(col, pivot);
        let pinv = inv(mat[col][col]);
        for c in col..=n {
            mat[col][c] = ((mat[col][c] as u128 * pinv as u128) % p as u128) as u64;
        }
        for r in 0..n {
            if r == col || mat[r][col] == 0 {
                continue;
            }
            let factor = mat[r][col];
            for c in col..=n {
                let sub = (factor as u128 * mat[col][c] as u128) % p as u128;
                mat[r][c] = ((mat[r][c] as u128 + p as u128 - sub) % p as u128) as u64;
            }
        }
    }
    (0..n).map(|r| mat[r][n]).collect()
}
