//! Exact modular polynomial arithmetic over Z_m[x]/(x^n + 1).
//!
//! Provides the negacyclic NTT, pointwise and schoolbook-free products,
//! sparse multiplication, Galois automorphisms, and the 128-bit
//! lazy-accumulation path (multiply-accumulate without per-term reduction,
//! one Barrett reduction at the end).

use crate::error::HeError;

/// Representation domain of a polynomial.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    /// Coefficients of x^0 .. x^{n-1}.
    Coefficient,
    /// Evaluations at psi^{2j+1} for j = 0..n (natural order).
    Evaluation,
}

/// Polynomial in Z_m[x]/(x^n + 1), coefficients in [0, m).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Polynomial {
    pub coeffs: Vec<u64>,
    pub modulus: u64,
    pub domain: Domain,
}

impl Polynomial {
    pub fn zero(n: usize, modulus: u64, domain: Domain) -> Self {
        Polynomial { coeffs: vec![0; n], modulus, domain }
    }

    pub fn constant(c: u64, n: usize, modulus: u64) -> Self {
        let mut coeffs = vec![0; n];
        coeffs[0] = c % modulus;
        Polynomial { coeffs, modulus, domain: Domain::Coefficient }
    }

    pub fn from_coeffs(coeffs: Vec<u64>, modulus: u64) -> Self {
        debug_assert!(coeffs.iter().all(|&c| c < modulus));
        Polynomial { coeffs, modulus, domain: Domain::Coefficient }
    }

    pub fn n(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0)
    }

    /// Coefficient-wise addition; domains and moduli must match.
    pub fn add(&self, other: &Self) -> Result<Self, HeError> {
        self.check_compatible(other)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(&a, &b)| add_mod(a, b, self.modulus))
            .collect();
        Ok(Polynomial { coeffs, modulus: self.modulus, domain: self.domain })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, HeError> {
        self.check_compatible(other)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(&a, &b)| sub_mod(a, b, self.modulus))
            .collect();
        Ok(Polynomial { coeffs, modulus: self.modulus, domain: self.domain })
    }

    pub fn neg(&self) -> Self {
        let m = self.modulus;
        let coeffs = self.coeffs.iter().map(|&c| if c == 0 { 0 } else { m - c }).collect();
        Polynomial { coeffs, modulus: m, domain: self.domain }
    }

    /// Multiply every coefficient by a scalar already reduced mod m.
    pub fn scale(&self, scalar: u64, barrett: &Barrett) -> Self {
        debug_assert_eq!(barrett.modulus(), self.modulus);
        let coeffs = self.coeffs.iter().map(|&c| barrett.mul(c, scalar)).collect();
        Polynomial { coeffs, modulus: self.modulus, domain: self.domain }
    }

    /// Centered representation in (-m/2, m/2].
    pub fn centered(&self) -> Vec<i64> {
        let half = self.modulus / 2;
        self.coeffs
            .iter()
            .map(|&c| if c > half { c as i64 - self.modulus as i64 } else { c as i64 })
            .collect()
    }

    /// log2 of the infinity norm of the centered representation.
    /// Returns negative infinity for the zero polynomial.
    pub fn inf_norm_bits(&self) -> f64 {
        let max = self.centered().iter().map(|c| c.unsigned_abs()).max().unwrap_or(0);
        if max == 0 {
            f64::NEG_INFINITY
        } else {
            (max as f64).log2()
        }
    }

    fn check_compatible(&self, other: &Self) -> Result<(), HeError> {
        if self.modulus != other.modulus || self.n() != other.n() {
            return Err(HeError::ModulusMismatch);
        }
        if self.domain != other.domain {
            return Err(HeError::DomainMismatch {
                expected: self.domain,
                found: other.domain,
            });
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Scalar modular arithmetic
// ---------------------------------------------------------------------------

#[inline]
pub fn add_mod(a: u64, b: u64, m: u64) -> u64 {
    let s = a + b;
    if s >= m { s - m } else { s }
}

#[inline]
pub fn sub_mod(a: u64, b: u64, m: u64) -> u64 {
    if a >= b { a - b } else { a + m - b }
}

#[inline]
pub fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

pub fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1u64 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Multiplicative inverse mod a prime m.
pub fn inv_mod(a: u64, m: u64) -> u64 {
    debug_assert!(a % m != 0);
    pow_mod(a, m - 2, m)
}

/// Centered value of x mod m, in (-m/2, m/2].
pub fn center(x: u64, m: u64) -> i64 {
    let x = x % m;
    if x > m / 2 {
        x as i64 - m as i64
    } else {
        x as i64
    }
}

/// Barrett reducer with a precomputed reciprocal.
///
/// Handles inputs up to `1 << capacity_bits()`; for a 60-bit modulus that is
/// the full 120-bit accumulator range used by the lazy path.
#[derive(Clone, Debug)]
pub struct Barrett {
    q: u64,
    k: u32,
    mu: u128, // floor(2^(k+64) / q)
}

impl Barrett {
    pub fn new(q: u64) -> Self {
        assert!(q >= 2);
        let k = 64 - q.leading_zeros();
        // 2^(k+64) fits in u128 because k <= 64.
        let mu = if k + 64 == 128 {
            // avoid 1 << 128
            let r = (u128::MAX % q as u128) + 1;
            (u128::MAX / q as u128) + u128::from(r == q as u128)
        } else {
            (1u128 << (k + 64)) / q as u128
        };
        Barrett { q, k, mu }
    }

    pub fn modulus(&self) -> u64 {
        self.q
    }

    /// Largest b such that reduce_u128 is valid for all x < 2^b.
    pub fn capacity_bits(&self) -> u32 {
        (self.k + 62).min(120)
    }

    /// x mod q for x < 2^capacity_bits().
    #[inline]
    pub fn reduce_u128(&self, x: u128) -> u64 {
        let qhat = umulhi_65(x >> (self.k - 1), self.mu);
        let mut r = x - qhat * self.q as u128;
        while r >= self.q as u128 {
            r -= self.q as u128;
        }
        r as u64
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        debug_assert!(a < self.q && b < self.q);
        self.reduce_u128(a as u128 * b as u128)
    }
}

/// (a * b) >> 65 where a < 2^63-ish and b < 2^66; exact via 128-bit halves.
#[inline]
fn umulhi_65(a: u128, b: u128) -> u128 {
    // Split b = b_hi * 2^64 + b_lo; a fits in well under 2^64 after the
    // caller's shift, so each partial product fits in u128.
    let b_hi = b >> 64;
    let b_lo = b & ((1u128 << 64) - 1);
    let lo = a * b_lo;
    let hi = a * b_hi;
    (hi + (lo >> 64)) >> 1
}

/// Shoup precomputation for multiplication by a fixed operand.
#[derive(Clone, Copy, Debug)]
pub struct Shoup {
    pub value: u64,
    quotient: u64, // floor(value * 2^64 / q)
}

impl Shoup {
    #[inline]
    pub fn new(value: u64, q: u64) -> Self {
        debug_assert!(value < q);
        let quotient = (((value as u128) << 64) / q as u128) as u64;
        Shoup { value, quotient }
    }

    /// a * value mod q; requires q < 2^63.
    #[inline]
    pub fn mul(&self, a: u64, q: u64) -> u64 {
        let qhat = ((self.quotient as u128 * a as u128) >> 64) as u64;
        let r = a
            .wrapping_mul(self.value)
            .wrapping_sub(qhat.wrapping_mul(q));
        if r >= q {
            r - q
        } else {
            r
        }
    }
}

// ---------------------------------------------------------------------------
// Negacyclic NTT
// ---------------------------------------------------------------------------

/// Smallest primitive 2n-th root of unity mod m (m prime, m = 1 mod 2n).
/// For power-of-two n these are exactly the x with x^n = -1 mod m; one is
/// obtained from any quadratic nonresidue raised to (m-1)/2n, and the
/// minimum is taken over its odd powers.
pub fn minimal_primitive_root(n: usize, m: u64) -> Option<u64> {
    let two_n = 2 * n as u64;
    if m < 3 || (m - 1) % two_n != 0 {
        return None;
    }
    let cofactor = (m - 1) / two_n;
    let mut base = 0;
    for x in 2..m {
        let y = pow_mod(x, cofactor, m);
        if pow_mod(y, n as u64, m) == m - 1 {
            base = y;
            break;
        }
    }
    if base == 0 {
        return None;
    }
    let sq = mul_mod(base, base, m);
    let mut best = base;
    let mut cur = base;
    for _ in 1..n {
        cur = mul_mod(cur, sq, m);
        if cur < best {
            best = cur;
        }
    }
    Some(best)
}

/// Precomputed tables for the negacyclic NTT over Z_m[x]/(x^n + 1).
#[derive(Clone, Debug)]
pub struct NttTables {
    pub n: usize,
    pub modulus: u64,
    pub psi: u64,
    log_n: u32,
    psi_powers: Vec<Shoup>,     // psi^i
    psi_inv_powers: Vec<Shoup>, // psi^{-i} * n^{-1}
    // stage_twiddles[s][j] = omega^(j * n / 2^(s+1)) for the CT stage s
    stage_twiddles: Vec<Vec<Shoup>>,
    stage_twiddles_inv: Vec<Vec<Shoup>>,
    barrett: Barrett,
}

impl NttTables {
    pub fn new(n: usize, modulus: u64) -> Result<Self, HeError> {
        if !n.is_power_of_two() || n < 2 {
            return Err(HeError::InvalidParams(format!("n = {n} is not a power of two")));
        }
        let psi = minimal_primitive_root(n, modulus).ok_or_else(|| {
            HeError::InvalidParams(format!("{modulus} has no primitive {}th root of unity", 2 * n))
        })?;
        Ok(Self::with_root(n, modulus, psi))
    }

    pub fn with_root(n: usize, modulus: u64, psi: u64) -> Self {
        let m = modulus;
        debug_assert_eq!(pow_mod(psi, n as u64, m), m - 1);
        let log_n = n.trailing_zeros();
        let omega = mul_mod(psi, psi, m);
        let psi_inv = inv_mod(psi, m);
        let omega_inv = inv_mod(omega, m);
        let n_inv = inv_mod(n as u64, m);

        let mut psi_powers = Vec::with_capacity(n);
        let mut psi_inv_powers = Vec::with_capacity(n);
        let (mut p, mut pi) = (1u64, n_inv);
        for _ in 0..n {
            psi_powers.push(Shoup::new(p, m));
            psi_inv_powers.push(Shoup::new(pi, m));
            p = mul_mod(p, psi, m);
            pi = mul_mod(pi, psi_inv, m);
        }

        let mut stage_twiddles = Vec::with_capacity(log_n as usize);
        let mut stage_twiddles_inv = Vec::with_capacity(log_n as usize);
        for s in 0..log_n {
            let half_m = 1usize << s;
            let wm = pow_mod(omega, (n >> (s + 1)) as u64, m);
            let wm_inv = pow_mod(omega_inv, (n >> (s + 1)) as u64, m);
            let mut fwd = Vec::with_capacity(half_m);
            let mut inv = Vec::with_capacity(half_m);
            let (mut w, mut wi) = (1u64, 1u64);
            for _ in 0..half_m {
                fwd.push(Shoup::new(w, m));
                inv.push(Shoup::new(wi, m));
                w = mul_mod(w, wm, m);
                wi = mul_mod(wi, wm_inv, m);
            }
            stage_twiddles.push(fwd);
            stage_twiddles_inv.push(inv);
        }

        NttTables {
            n,
            modulus,
            psi,
            log_n,
            psi_powers,
            psi_inv_powers,
            stage_twiddles,
            stage_twiddles_inv,
            barrett: Barrett::new(m),
        }
    }

    pub fn barrett(&self) -> &Barrett {
        &self.barrett
    }

    fn bit_reverse_permute(&self, a: &mut [u64]) {
        let log_n = self.log_n as usize;
        for i in 0..a.len() {
            let r = bit_reverse(i, log_n);
            if i < r {
                a.swap(i, r);
            }
        }
    }

    /// In-place forward transform of a coefficient vector.
    /// Output index j holds the evaluation at psi^{2j+1}.
    pub fn forward_in_place(&self, a: &mut [u64]) {
        let m = self.modulus;
        debug_assert_eq!(a.len(), self.n);
        for (x, p) in a.iter_mut().zip(&self.psi_powers) {
            *x = p.mul(*x, m);
        }
        self.bit_reverse_permute(a);
        for s in 0..self.log_n {
            let step = 1usize << (s + 1);
            let half = step >> 1;
            let tw = &self.stage_twiddles[s as usize];
            let mut k = 0;
            while k < self.n {
                for j in 0..half {
                    let u = a[k + j];
                    let t = tw[j].mul(a[k + j + half], m);
                    a[k + j] = add_mod(u, t, m);
                    a[k + j + half] = sub_mod(u, t, m);
                }
                k += step;
            }
        }
    }

    /// In-place inverse transform back to coefficients.
    pub fn inverse_in_place(&self, a: &mut [u64]) {
        let m = self.modulus;
        debug_assert_eq!(a.len(), self.n);
        for s in (0..self.log_n).rev() {
            let step = 1usize << (s + 1);
            let half = step >> 1;
            let tw = &self.stage_twiddles_inv[s as usize];
            let mut k = 0;
            while k < self.n {
                for j in 0..half {
                    let u = a[k + j];
                    let v = a[k + j + half];
                    a[k + j] = add_mod(u, v, m);
                    a[k + j + half] = tw[j].mul(sub_mod(u, v, m), m);
                }
                k += step;
            }
        }
        self.bit_reverse_permute(a);
        for (x, p) in a.iter_mut().zip(&self.psi_inv_powers) {
            *x = p.mul(*x, m);
        }
    }
}

fn bit_reverse(x: usize, bits: usize) -> usize {
    let mut r = 0;
    let mut x = x;
    for _ in 0..bits {
        r = (r << 1) | (x & 1);
        x >>= 1;
    }
    r
}

/// Coefficient domain -> evaluation domain.
pub fn ntt_forward(poly: &Polynomial, tables: &NttTables) -> Result<Polynomial, HeError> {
    if poly.domain != Domain::Coefficient {
        return Err(HeError::DomainMismatch { expected: Domain::Coefficient, found: poly.domain });
    }
    if poly.modulus != tables.modulus || poly.n() != tables.n {
        return Err(HeError::ModulusMismatch);
    }
    let mut coeffs = poly.coeffs.clone();
    tables.forward_in_place(&mut coeffs);
    Ok(Polynomial { coeffs, modulus: poly.modulus, domain: Domain::Evaluation })
}

/// Evaluation domain -> coefficient domain.
pub fn ntt_inverse(poly: &Polynomial, tables: &NttTables) -> Result<Polynomial, HeError> {
    if poly.domain != Domain::Evaluation {
        return Err(HeError::DomainMismatch { expected: Domain::Evaluation, found: poly.domain });
    }
    if poly.modulus != tables.modulus || poly.n() != tables.n {
        return Err(HeError::ModulusMismatch);
    }
    let mut coeffs = poly.coeffs.clone();
    tables.inverse_in_place(&mut coeffs);
    Ok(Polynomial { coeffs, modulus: poly.modulus, domain: Domain::Coefficient })
}

/// Negacyclic product of two coefficient-domain polynomials.
pub fn poly_mul(a: &Polynomial, b: &Polynomial, tables: &NttTables) -> Result<Polynomial, HeError> {
    let fa = ntt_forward(a, tables)?;
    let fb = ntt_forward(b, tables)?;
    let prod = pointwise_mul(&fa, &fb, tables.barrett())?;
    ntt_inverse(&prod, tables)
}

/// Slot-wise product of two evaluation-domain polynomials.
pub fn pointwise_mul(a: &Polynomial, b: &Polynomial, barrett: &Barrett) -> Result<Polynomial, HeError> {
    if a.domain != Domain::Evaluation || b.domain != Domain::Evaluation {
        let found = if a.domain != Domain::Evaluation { a.domain } else { b.domain };
        return Err(HeError::DomainMismatch { expected: Domain::Evaluation, found });
    }
    if a.modulus != b.modulus || a.n() != b.n() {
        return Err(HeError::ModulusMismatch);
    }
    let coeffs = a
        .coeffs
        .iter()
        .zip(&b.coeffs)
        .map(|(&x, &y)| barrett.mul(x, y))
        .collect();
    Ok(Polynomial { coeffs, modulus: a.modulus, domain: Domain::Evaluation })
}

/// Multiply by a polynomial given as a sparse list of (index, value) terms,
/// exploiting that each term is a negacyclic monomial shift.
pub fn sparse_mul(a: &Polynomial, sparse: &[(usize, u64)]) -> Result<Polynomial, HeError> {
    if a.domain != Domain::Coefficient {
        return Err(HeError::DomainMismatch { expected: Domain::Coefficient, found: a.domain });
    }
    let n = a.n();
    let m = a.modulus;
    let mut out = vec![0u64; n];
    for &(idx, val) in sparse {
        if idx >= n {
            return Err(HeError::IndexOutOfRange { index: idx, n });
        }
        if val == 0 {
            continue;
        }
        for i in 0..n {
            let term = mul_mod(a.coeffs[i], val, m);
            let j = i + idx;
            if j < n {
                out[j] = add_mod(out[j], term, m);
            } else {
                // x^(n+r) = -x^r
                out[j - n] = sub_mod(out[j - n], term, m);
            }
        }
    }
    Ok(Polynomial { coeffs: out, modulus: m, domain: Domain::Coefficient })
}

// ---------------------------------------------------------------------------
// Galois automorphisms x -> x^( element ), element odd mod 2n
// ---------------------------------------------------------------------------

/// Apply x -> x^element to a coefficient-domain polynomial.
pub fn automorphism_coeff(poly: &Polynomial, element: u64) -> Polynomial {
    debug_assert_eq!(poly.domain, Domain::Coefficient);
    let n = poly.n();
    let two_n = 2 * n as u64;
    debug_assert!(element % 2 == 1 && element < two_n);
    let m = poly.modulus;
    let mut out = vec![0u64; n];
    for (i, &c) in poly.coeffs.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let t = (i as u64 * element) % two_n;
        if t < n as u64 {
            out[t as usize] = add_mod(out[t as usize], c, m);
        } else {
            out[(t - n as u64) as usize] = sub_mod(out[(t - n as u64) as usize], c, m);
        }
    }
    Polynomial { coeffs: out, modulus: m, domain: Domain::Coefficient }
}

/// Index permutation implementing the automorphism on evaluation vectors:
/// out[j] = in[perm[j]].
pub fn automorphism_eval_perm(n: usize, element: u64) -> Vec<usize> {
    let two_n = 2 * n as u64;
    (0..n)
        .map(|j| {
            let e = ((2 * j as u64 + 1) * element) % two_n;
            ((e - 1) / 2) as usize
        })
        .collect()
}

/// Apply a precomputed evaluation-domain permutation.
pub fn apply_eval_perm(poly: &Polynomial, perm: &[usize]) -> Polynomial {
    debug_assert_eq!(poly.domain, Domain::Evaluation);
    let coeffs = perm.iter().map(|&i| poly.coeffs[i]).collect();
    Polynomial { coeffs, modulus: poly.modulus, domain: Domain::Evaluation }
}

// ---------------------------------------------------------------------------
// 128-bit lazy accumulation
// ---------------------------------------------------------------------------

/// Unreduced multiply-accumulate buffer with 128-bit lanes.
#[derive(Clone, Debug)]
pub struct WideAccumulator {
    pub coeffs: Vec<u128>,
    pub modulus: u64,
    pub domain: Domain,
    pub term_count: u64,
}

impl WideAccumulator {
    pub fn zero(n: usize, modulus: u64, domain: Domain) -> Self {
        WideAccumulator { coeffs: vec![0; n], modulus, domain, term_count: 0 }
    }

    pub fn n(&self) -> usize {
        self.coeffs.len()
    }
}

/// Capacity check done once per accumulation plan: `terms` products of a
/// polynomial with coefficients < q by scalars <= s_max must stay below the
/// Barrett window (120 bits for a 60-bit modulus).
pub fn mac_plan_fits(terms: u64, s_max: u64, barrett: &Barrett) -> bool {
    let q = barrett.modulus();
    match (s_max as u128)
        .checked_mul((q - 1) as u128)
        .and_then(|p| p.checked_mul(terms as u128))
    {
        Some(total) => total < (1u128 << barrett.capacity_bits()),
        None => false,
    }
}

/// acc += scalar * poly, without modular reduction.
pub fn lazy_mac(acc: &mut WideAccumulator, poly: &Polynomial, scalar: u64) -> Result<(), HeError> {
    if acc.modulus != poly.modulus || acc.n() != poly.n() {
        return Err(HeError::ModulusMismatch);
    }
    if acc.domain != poly.domain {
        return Err(HeError::DomainMismatch { expected: acc.domain, found: poly.domain });
    }
    if scalar == 0 {
        return Ok(());
    }
    let s = scalar as u128;
    for (a, &c) in acc.coeffs.iter_mut().zip(&poly.coeffs) {
        *a += s * c as u128;
    }
    acc.term_count += 1;
    Ok(())
}

/// Coefficient-wise reduction of an accumulator to canonical range.
pub fn reduce(acc: &WideAccumulator, barrett: &Barrett) -> Polynomial {
    debug_assert_eq!(barrett.modulus(), acc.modulus);
    let coeffs = acc.coeffs.iter().map(|&x| barrett.reduce_u128(x)).collect();
    Polynomial { coeffs, modulus: acc.modulus, domain: acc.domain }
}
