//! Symmetric BFV: key generation, SIMD encode/decode, encrypt/decrypt, the
//! homomorphic operations (HAdd, PMult, CMult, HRot), key switching with a
//! configurable decomposition base, hoisting, and a ground-truth noise meter.
//!
//! Slots form a 2 x (n/2) matrix. "Rotation by step" rotates the columns of
//! both rows simultaneously; the conjugation automorphism swaps the rows.

use crate::error::HeError;
use crate::modring::{
    add_mod, apply_eval_perm, automorphism_coeff, automorphism_eval_perm, center, inv_mod,
    mul_mod, ntt_forward, ntt_inverse, pow_mod, Barrett, Domain, NttTables, Polynomial, Shoup,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::collections::BTreeMap;

/// Standard deviation of the rounded-Gaussian error sampler.
pub const ERROR_SIGMA: f64 = 3.19;
/// Truncation bound: 6 sigma, rounded up.
pub const ERROR_BOUND: i64 = 20;

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

/// Ring and modulus parameters; all congruence preconditions live here.
#[derive(Clone, Debug)]
pub struct RingParams {
    pub n: usize,
    pub q: u64,
    pub p: u64,
    pub delta: u64,
    q_tables: NttTables,
    p_tables: NttTables,
    /// slot index (row * n/2 + col) -> transform index
    slot_to_ntt: Vec<usize>,
}

impl RingParams {
    pub fn new(n: usize, p: u64, q: u64) -> Result<Self, HeError> {
        if !n.is_power_of_two() || n < 4 {
            return Err(HeError::InvalidParams(format!("n = {n} must be a power of two >= 4")));
        }
        let two_n = 2 * n as u64;
        if p % two_n != 1 {
            return Err(HeError::InvalidParams(format!("p = {p} is not 1 mod {two_n}")));
        }
        if q % two_n != 1 {
            return Err(HeError::InvalidParams(format!("q = {q} is not 1 mod {two_n}")));
        }
        if q <= p {
            return Err(HeError::InvalidParams("q must exceed p".into()));
        }
        if !crate::params::is_prime_u64(p) || !crate::params::is_prime_u64(q) {
            return Err(HeError::InvalidParams("p and q must be prime".into()));
        }
        let delta = q / p;
        debug_assert!(delta * p <= q && q < (delta + 1) * p);
        let q_tables = NttTables::new(n, q)?;
        let p_tables = NttTables::new(n, p)?;
        let slot_to_ntt = slot_map(n);
        Ok(RingParams { n, q, p, delta, q_tables, p_tables, slot_to_ntt })
    }

    pub fn q_tables(&self) -> &NttTables {
        &self.q_tables
    }

    pub fn p_tables(&self) -> &NttTables {
        &self.p_tables
    }

    pub fn barrett_q(&self) -> &Barrett {
        self.q_tables.barrett()
    }

    pub fn q_bits(&self) -> u32 {
        64 - self.q.leading_zeros()
    }

    /// Decryption succeeds while noise stays below this many bits.
    pub fn margin_bits(&self) -> f64 {
        (self.delta as f64 / 2.0).log2()
    }

    pub fn slot_count(&self) -> usize {
        self.n
    }

    pub fn cols(&self) -> usize {
        self.n / 2
    }
}

/// slot (row, col) <-> exponent map: row 0 holds 3^col, row 1 holds -3^col
/// (mod 2n); transform index j holds the evaluation at psi^(2j+1).
pub(crate) fn slot_map(n: usize) -> Vec<usize> {
    let two_n = 2 * n as u64;
    let half = n / 2;
    let mut map = vec![0usize; n];
    let mut e = 1u64;
    for c in 0..half {
        map[c] = ((e - 1) / 2) as usize;
        map[half + c] = ((two_n - e - 1) / 2) as usize;
        e = mul_mod(e, 3, two_n);
    }
    debug_assert_eq!(
        {
            let mut s = map.clone();
            s.sort_unstable();
            s
        },
        (0..n).collect::<Vec<_>>()
    );
    map
}

// ---------------------------------------------------------------------------
// Keys, plaintexts, ciphertexts
// ---------------------------------------------------------------------------

/// Binary secret key, deterministic from its seed.
#[derive(Clone, Debug)]
pub struct SecretKey {
    pub s: Polynomial,
    s_ntt: Polynomial,
    pub seed: u64,
}

impl SecretKey {
    /// All-zero secret; decryption then reads delta*m + e directly.
    pub fn zero_for_tests(params: &RingParams) -> Self {
        let s = Polynomial::zero(params.n, params.q, Domain::Coefficient);
        let s_ntt = ntt_forward(&s, params.q_tables()).unwrap();
        SecretKey { s, s_ntt, seed: 0 }
    }
}

pub fn keygen(params: &RingParams, seed: u64) -> SecretKey {
    let mut rng = seeded_rng(seed, b"secretkey");
    let coeffs = (0..params.n).map(|_| rng.gen_range(0..=1u64)).collect();
    let s = Polynomial::from_coeffs(coeffs, params.q);
    let s_ntt = ntt_forward(&s, params.q_tables()).unwrap();
    SecretKey { s, s_ntt, seed }
}

/// Deterministic RNG stream namespaced by a label, so independent uses of
/// the same master seed do not collide.
pub fn seeded_rng(seed: u64, label: &[u8]) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    let take = label.len().min(24);
    key[8..8 + take].copy_from_slice(&label[..take]);
    use rand::SeedableRng;
    ChaCha8Rng::from_seed(key)
}

/// Message polynomial mod p (coefficient domain).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Plaintext {
    pub poly: Polynomial,
}

impl Plaintext {
    pub fn zero(params: &RingParams) -> Self {
        Plaintext { poly: Polynomial::zero(params.n, params.p, Domain::Coefficient) }
    }
}

/// Pair of mod-q polynomials plus the accumulated plaintext scale factor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ciphertext {
    pub c0: Polynomial,
    pub c1: Polynomial,
    pub scale_tag: u64,
}

impl Ciphertext {
    pub fn domain(&self) -> Domain {
        debug_assert_eq!(self.c0.domain, self.c1.domain);
        self.c0.domain
    }

    pub fn to_eval(&self, params: &RingParams) -> Result<Ciphertext, HeError> {
        if self.domain() == Domain::Evaluation {
            return Ok(self.clone());
        }
        Ok(Ciphertext {
            c0: ntt_forward(&self.c0, params.q_tables())?,
            c1: ntt_forward(&self.c1, params.q_tables())?,
            scale_tag: self.scale_tag,
        })
    }

    pub fn to_coeff(&self, params: &RingParams) -> Result<Ciphertext, HeError> {
        if self.domain() == Domain::Coefficient {
            return Ok(self.clone());
        }
        Ok(Ciphertext {
            c0: ntt_inverse(&self.c0, params.q_tables())?,
            c1: ntt_inverse(&self.c1, params.q_tables())?,
            scale_tag: self.scale_tag,
        })
    }
}

// ---------------------------------------------------------------------------
// SIMD encode / decode
// ---------------------------------------------------------------------------

/// Encode a length-n slot vector (2 x n/2 matrix, row-major) mod p.
pub fn encode(params: &RingParams, slots: &[u64]) -> Result<Plaintext, HeError> {
    if slots.len() != params.n {
        return Err(HeError::LengthMismatch { expected: params.n, found: slots.len() });
    }
    let mut buf = vec![0u64; params.n];
    for (s, &v) in slots.iter().enumerate() {
        buf[params.slot_to_ntt[s]] = v % params.p;
    }
    params.p_tables.inverse_in_place(&mut buf);
    Ok(Plaintext { poly: Polynomial { coeffs: buf, modulus: params.p, domain: Domain::Coefficient } })
}

pub fn decode(params: &RingParams, pt: &Plaintext) -> Result<Vec<u64>, HeError> {
    if pt.poly.n() != params.n || pt.poly.modulus != params.p {
        return Err(HeError::ModulusMismatch);
    }
    let mut buf = pt.poly.coeffs.clone();
    params.p_tables.forward_in_place(&mut buf);
    Ok((0..params.n).map(|s| buf[params.slot_to_ntt[s]]).collect())
}

/// Decode and divide out a scale factor (p is prime, so the inverse exists).
pub fn decode_rescaled(params: &RingParams, pt: &Plaintext, scale: u64) -> Result<Vec<u64>, HeError> {
    let slots = decode(params, pt)?;
    if scale % params.p == 0 {
        return Err(HeError::InvalidParams("scale is 0 mod p".into()));
    }
    let inv = inv_mod(scale % params.p, params.p);
    Ok(slots.into_iter().map(|v| mul_mod(v, inv, params.p)).collect())
}

// ---------------------------------------------------------------------------
// Encrypt / decrypt / noise meter
// ---------------------------------------------------------------------------

fn sample_error(rng: &mut ChaCha8Rng) -> i64 {
    loop {
        let x: f64 = StandardNormal.sample(rng);
        let r = (x * ERROR_SIGMA).round() as i64;
        if r.abs() <= ERROR_BOUND {
            return r;
        }
    }
}

fn error_poly(params: &RingParams, rng: &mut ChaCha8Rng) -> Polynomial {
    let q = params.q;
    let coeffs = (0..params.n)
        .map(|_| {
            let e = sample_error(rng);
            if e < 0 {
                q - e.unsigned_abs()
            } else {
                e as u64
            }
        })
        .collect();
    Polynomial::from_coeffs(coeffs, q)
}

fn uniform_poly(params: &RingParams, rng: &mut ChaCha8Rng, domain: Domain) -> Polynomial {
    let coeffs = (0..params.n).map(|_| rng.gen_range(0..params.q)).collect();
    Polynomial { coeffs, modulus: params.q, domain }
}

/// delta * m lifted into the ciphertext modulus (coefficients of m in [0,p)).
fn delta_lift(params: &RingParams, pt: &Plaintext) -> Polynomial {
    let coeffs = pt
        .poly
        .coeffs
        .iter()
        .map(|&m| ((params.delta as u128 * m as u128) % params.q as u128) as u64)
        .collect();
    Polynomial { coeffs, modulus: params.q, domain: Domain::Coefficient }
}

/// Centered lift of a mod-p polynomial into mod q: values above p/2 become
/// small negatives mod q, keeping multiplication noise proportional to the
/// centered magnitude.
pub fn lift_centered(params: &RingParams, poly: &Polynomial) -> Polynomial {
    debug_assert_eq!(poly.modulus, params.p);
    let (p, q) = (params.p, params.q);
    let coeffs = poly
        .coeffs
        .iter()
        .map(|&c| if c > p / 2 { q - (p - c) } else { c })
        .collect();
    Polynomial { coeffs, modulus: q, domain: poly.domain }
}

/// Centered lift of a mod-p scalar into mod q.
pub fn lift_scalar(params: &RingParams, s: u64) -> u64 {
    let s = s % params.p;
    if s > params.p / 2 {
        params.q - (params.p - s)
    } else {
        s
    }
}

/// Symmetric encryption: (delta*m + a*s + e, -a).
pub fn encrypt(params: &RingParams, sk: &SecretKey, pt: &Plaintext, rng: &mut ChaCha8Rng) -> Ciphertext {
    let a_ntt = uniform_poly(params, rng, Domain::Evaluation);
    let e = error_poly(params, rng);
    let a_s = ntt_inverse(
        &crate::modring::pointwise_mul(&a_ntt, &sk.s_ntt, params.barrett_q()).unwrap(),
        params.q_tables(),
    )
    .unwrap();
    let c0 = delta_lift(params, pt).add(&a_s).unwrap().add(&e).unwrap();
    let c1 = ntt_inverse(&a_ntt, params.q_tables()).unwrap().neg();
    Ciphertext { c0, c1, scale_tag: 1 }
}

/// c0 + c1*s in coefficient domain.
fn raw_phase(params: &RingParams, sk: &SecretKey, ct: &Ciphertext) -> Polynomial {
    let ct = ct.to_eval(params).unwrap();
    let c1s = crate::modring::pointwise_mul(&ct.c1, &sk.s_ntt, params.barrett_q()).unwrap();
    let v = ct.c0.add(&c1s).unwrap();
    ntt_inverse(&v, params.q_tables()).unwrap()
}

pub fn decrypt(params: &RingParams, sk: &SecretKey, ct: &Ciphertext) -> Plaintext {
    let v = raw_phase(params, sk, ct);
    let (p, q) = (params.p as u128, params.q as u128);
    let coeffs = v
        .coeffs
        .iter()
        .map(|&c| (((p * c as u128 + q / 2) / q) % p) as u64)
        .collect();
    Plaintext { poly: Polynomial { coeffs, modulus: params.p, domain: Domain::Coefficient } }
}

/// Decrypt, but fail if the measured noise (against the expected message)
/// has exhausted the margin. Test/debug use: requires the secret key anyway.
pub fn decrypt_checked(
    params: &RingParams,
    sk: &SecretKey,
    ct: &Ciphertext,
    expected: &Plaintext,
) -> Result<Plaintext, HeError> {
    let noise = noise_bits(params, sk, ct, expected);
    let margin = params.margin_bits();
    if noise >= margin {
        return Err(HeError::DecryptionMargin { noise_bits: noise, margin_bits: margin });
    }
    Ok(decrypt(params, sk, ct))
}

/// log2 of the infinity norm of c0 + c1*s - delta*(scale_tag * expected).
/// Negative infinity for a noiseless (forged) ciphertext.
pub fn noise_bits(params: &RingParams, sk: &SecretKey, ct: &Ciphertext, expected: &Plaintext) -> f64 {
    let v = raw_phase(params, sk, ct);
    let scaled = Plaintext {
        poly: expected.poly.scale(ct.scale_tag % params.p, params.p_tables().barrett()),
    };
    let target = delta_lift(params, &scaled);
    let e = v.sub(&target).unwrap();
    e.inf_norm_bits()
}

// ---------------------------------------------------------------------------
// Homomorphic operations
// ---------------------------------------------------------------------------

pub fn hadd(params: &RingParams, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, HeError> {
    if a.scale_tag != b.scale_tag {
        return Err(HeError::ScaleMismatch { left: a.scale_tag, right: b.scale_tag });
    }
    let (a, b) = if a.domain() == b.domain() {
        (a.clone(), b.clone())
    } else {
        (a.to_eval(params)?, b.to_eval(params)?)
    };
    Ok(Ciphertext { c0: a.c0.add(&b.c0)?, c1: a.c1.add(&b.c1)?, scale_tag: a.scale_tag })
}

/// Plaintext prepared for repeated slot-wise multiplication.
#[derive(Clone, Debug)]
pub struct PreparedPlaintext {
    pub ntt: Vec<Shoup>,
    pub n: usize,
}

impl PreparedPlaintext {
    pub fn new(params: &RingParams, pt: &Plaintext) -> Self {
        let lifted = lift_centered(params, &pt.poly);
        let w = ntt_forward(&lifted, params.q_tables()).unwrap();
        PreparedPlaintext {
            ntt: w.coeffs.iter().map(|&c| Shoup::new(c, params.q)).collect(),
            n: params.n,
        }
    }
}

/// Slot-wise ciphertext-plaintext product.
pub fn pmult(params: &RingParams, ct: &Ciphertext, pt: &Plaintext) -> Result<Ciphertext, HeError> {
    pmult_prepared(params, ct, &PreparedPlaintext::new(params, pt))
}

pub fn pmult_prepared(
    params: &RingParams,
    ct: &Ciphertext,
    pt: &PreparedPlaintext,
) -> Result<Ciphertext, HeError> {
    if pt.n != params.n {
        return Err(HeError::ModulusMismatch);
    }
    let ct = ct.to_eval(params)?;
    let q = params.q;
    let mul = |poly: &Polynomial| -> Polynomial {
        let coeffs = poly.coeffs.iter().zip(&pt.ntt).map(|(&c, w)| w.mul(c, q)).collect();
        Polynomial { coeffs, modulus: q, domain: Domain::Evaluation }
    };
    Ok(Ciphertext { c0: mul(&ct.c0), c1: mul(&ct.c1), scale_tag: ct.scale_tag })
}

/// Multiply every slot by a scalar (mod p), lifted centered so noise grows
/// with the scalar's magnitude, not its residue.
pub fn cmult(params: &RingParams, ct: &Ciphertext, s: u64) -> Result<Ciphertext, HeError> {
    let sq = lift_scalar(params, s);
    let b = params.barrett_q();
    Ok(Ciphertext { c0: ct.c0.scale(sq, b), c1: ct.c1.scale(sq, b), scale_tag: ct.scale_tag })
}

// ---------------------------------------------------------------------------
// Rotations: Galois automorphisms + key switching
// ---------------------------------------------------------------------------

/// A slot permutation: left column rotation by `shift`, optionally composed
/// with the row swap (conjugation automorphism).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct GaloisOp {
    pub shift: usize,
    pub swap: bool,
}

impl GaloisOp {
    pub fn rotation(shift: isize, n: usize) -> Self {
        let half = (n / 2) as isize;
        GaloisOp { shift: shift.rem_euclid(half) as usize, swap: false }
    }

    pub fn new(shift: isize, swap: bool, n: usize) -> Self {
        let half = (n / 2) as isize;
        GaloisOp { shift: shift.rem_euclid(half) as usize, swap }
    }

    pub const ROW_SWAP: GaloisOp = GaloisOp { shift: 0, swap: true };

    pub fn is_identity(&self) -> bool {
        self.shift == 0 && !self.swap
    }

    /// Odd Galois element a with sigma_a(x) = x^a realizing this slot motion.
    pub fn element(&self, n: usize) -> u64 {
        let two_n = 2 * n as u64;
        let g = pow_mod(3, self.shift as u64, two_n);
        if self.swap {
            two_n - g
        } else {
            g
        }
    }
}

/// Per-step switching key: l_ct pairs of mod-q polynomials (NTT domain),
/// with Shoup duals for the hot dot product, plus the slot permutation.
#[derive(Clone, Debug)]
pub struct StepKey {
    pub ks_b: Vec<Polynomial>,
    pub ks_a: Vec<Polynomial>,
    ks_b_shoup: Vec<Vec<Shoup>>,
    ks_a_shoup: Vec<Vec<Shoup>>,
    perm: Vec<usize>,
}

/// Switching keys for a set of rotations, at decomposition base 2^W.
#[derive(Clone, Debug)]
pub struct GaloisKeySet {
    pub w_bits: u32,
    pub l_ct: usize,
    pub n: usize,
    pub q: u64,
    keys: BTreeMap<GaloisOp, StepKey>,
}

impl GaloisKeySet {
    pub fn steps(&self) -> impl Iterator<Item = &GaloisOp> {
        self.keys.keys()
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Raw key material bytes: 2 polynomials of n 8-byte words per digit,
    /// per step.
    pub fn payload_bytes(&self) -> usize {
        self.keys.len() * 2 * self.n * 8 * self.l_ct
    }

    pub fn get(&self, op: &GaloisOp) -> Result<&StepKey, HeError> {
        self.keys.get(op).ok_or(HeError::MissingKey { shift: op.shift, swap: op.swap })
    }
}

pub fn l_ct_for(q_bits: u32, w_bits: u32) -> usize {
    ((q_bits + w_bits - 1) / w_bits) as usize
}

/// Generate switching keys for each requested rotation.
pub fn galois_keygen(
    params: &RingParams,
    sk: &SecretKey,
    ops: &[GaloisOp],
    w_bits: u32,
    rng: &mut ChaCha8Rng,
) -> Result<GaloisKeySet, HeError> {
    if w_bits < 2 || w_bits > params.q_bits() {
        // balanced base-2^W digits need W >= 2 so every sign has a digit
        return Err(HeError::InvalidParams(format!("W = {w_bits} outside [2, {}]", params.q_bits())));
    }
    let l_ct = l_ct_for(params.q_bits(), w_bits);
    let mut keys = BTreeMap::new();
    for op in ops {
        if op.is_identity() || keys.contains_key(op) {
            continue;
        }
        let element = op.element(params.n);
        let s_rot = automorphism_coeff(&sk.s, element);
        let mut ks_b = Vec::with_capacity(l_ct);
        let mut ks_a = Vec::with_capacity(l_ct);
        for j in 0..l_ct {
            // b_j = B^j * sigma(s) + e_j - a_j * s
            let base_pow = base_power(params.q, w_bits, j);
            let scaled = s_rot.scale(base_pow, params.barrett_q());
            let body = scaled.add(&error_poly(params, rng)).unwrap();
            let body_ntt = ntt_forward(&body, params.q_tables()).unwrap();
            let a_ntt = uniform_poly(params, rng, Domain::Evaluation);
            let a_s = crate::modring::pointwise_mul(&a_ntt, &sk.s_ntt, params.barrett_q()).unwrap();
            ks_b.push(body_ntt.sub(&a_s).unwrap());
            ks_a.push(a_ntt);
        }
        let ks_b_shoup = ks_b
            .iter()
            .map(|p| p.coeffs.iter().map(|&c| Shoup::new(c, params.q)).collect())
            .collect();
        let ks_a_shoup = ks_a
            .iter()
            .map(|p| p.coeffs.iter().map(|&c| Shoup::new(c, params.q)).collect())
            .collect();
        keys.insert(
            *op,
            StepKey {
                ks_b,
                ks_a,
                ks_b_shoup,
                ks_a_shoup,
                perm: automorphism_eval_perm(params.n, element),
            },
        );
    }
    Ok(GaloisKeySet { w_bits, l_ct, n: params.n, q: params.q, keys })
}

fn base_power(q: u64, w_bits: u32, j: usize) -> u64 {
    // W * j < bitlen(q) <= 64, so the power fits in u64
    let shift = w_bits as usize * j;
    debug_assert!(shift < 64);
    (1u64 << shift) % q
}

/// Ciphertext decomposed once for reuse across many rotations.
#[derive(Clone, Debug)]
pub struct DecomposedCiphertext {
    c0_ntt: Polynomial,
    c1_ntt: Polynomial,
    digits_ntt: Vec<Polynomial>,
    pub w_bits: u32,
    pub scale_tag: u64,
}

/// Balanced base-2^W digits of the centered value of c mod q.
fn decompose_coeff(c: u64, q: u64, w_bits: u32, out: &mut [i64]) {
    let b = 1i64 << w_bits;
    let half = b >> 1;
    let mut v = center(c, q);
    for d in out.iter_mut() {
        let mut r = v.rem_euclid(b);
        if r >= half {
            r -= b;
        }
        *d = r;
        v = (v - r) / b;
    }
    debug_assert_eq!(v, 0, "decomposition did not terminate");
}

/// Split the rotation into its two steps; this is the expensive half,
/// executed just once for a ciphertext that will be rotated many times.
pub fn hoist_decompose(
    params: &RingParams,
    ct: &Ciphertext,
    w_bits: u32,
) -> Result<DecomposedCiphertext, HeError> {
    let ct = ct.to_coeff(params)?;
    let l_ct = l_ct_for(params.q_bits(), w_bits);
    let q = params.q;
    let mut digit_coeffs = vec![vec![0u64; params.n]; l_ct];
    let mut scratch = vec![0i64; l_ct];
    for (i, &c) in ct.c1.coeffs.iter().enumerate() {
        decompose_coeff(c, q, w_bits, &mut scratch);
        for (j, &d) in scratch.iter().enumerate() {
            digit_coeffs[j][i] = if d < 0 { q - d.unsigned_abs() } else { d as u64 };
        }
    }
    let digits_ntt = digit_coeffs
        .into_iter()
        .map(|coeffs| {
            ntt_forward(&Polynomial { coeffs, modulus: q, domain: Domain::Coefficient }, params.q_tables())
                .unwrap()
        })
        .collect();
    Ok(DecomposedCiphertext {
        c0_ntt: ntt_forward(&ct.c0, params.q_tables())?,
        c1_ntt: ntt_forward(&ct.c1, params.q_tables())?,
        digits_ntt,
        w_bits,
        scale_tag: ct.scale_tag,
    })
}

/// The cheap half of a hoisted rotation: permute the shared decomposition
/// and fold in the switching key. Bit-identical to a direct `hrot`.
pub fn hoisted_rot(
    params: &RingParams,
    dec: &DecomposedCiphertext,
    op: GaloisOp,
    keys: &GaloisKeySet,
) -> Result<Ciphertext, HeError> {
    if op.is_identity() {
        return Ok(Ciphertext {
            c0: dec.c0_ntt.clone(),
            c1: dec.c1_ntt.clone(),
            scale_tag: dec.scale_tag,
        });
    }
    if dec.w_bits != keys.w_bits {
        return Err(HeError::BaseMismatch { keys: keys.w_bits, operand: dec.w_bits });
    }
    let key = keys.get(&op)?;
    let q = params.q;
    let n = params.n;
    let mut c0 = apply_eval_perm(&dec.c0_ntt, &key.perm).coeffs;
    let mut c1 = vec![0u64; n];
    for j in 0..keys.l_ct {
        let digit = apply_eval_perm(&dec.digits_ntt[j], &key.perm);
        let bsh = &key.ks_b_shoup[j];
        let ash = &key.ks_a_shoup[j];
        for i in 0..n {
            let d = digit.coeffs[i];
            c0[i] = add_mod(c0[i], bsh[i].mul(d, q), q);
            c1[i] = add_mod(c1[i], ash[i].mul(d, q), q);
        }
    }
    Ok(Ciphertext {
        c0: Polynomial { coeffs: c0, modulus: q, domain: Domain::Evaluation },
        c1: Polynomial { coeffs: c1, modulus: q, domain: Domain::Evaluation },
        scale_tag: dec.scale_tag,
    })
}

/// Rotate slots: columns left by op.shift, rows swapped if op.swap.
pub fn hrot(
    params: &RingParams,
    ct: &Ciphertext,
    op: GaloisOp,
    keys: &GaloisKeySet,
) -> Result<Ciphertext, HeError> {
    let dec = hoist_decompose(params, ct, keys.w_bits)?;
    hoisted_rot(params, &dec, op, keys)
}

// ---------------------------------------------------------------------------
// Serialization (little-endian 64-bit words behind small headers)
// ---------------------------------------------------------------------------

pub const PLAINTEXT_MAGIC: u32 = 0x5459_5048; // "HYPT"
pub const CIPHERTEXT_MAGIC: u32 = 0x5443_5948; // "HYCT"
pub const GALOIS_KEY_MAGIC: u32 = 0x4b47_5948; // "HYGK"
pub const FORMAT_VERSION: u8 = 1;

/// 12-byte plaintext header + n coefficients.
pub const PLAINTEXT_HEADER_BYTES: usize = 12;
/// 24-byte ciphertext header + 2n coefficients.
pub const CIPHERTEXT_HEADER_BYTES: usize = 24;

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn get_u32(buf: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(buf[at..at + 4].try_into().unwrap())
}

fn get_u64(buf: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(buf[at..at + 8].try_into().unwrap())
}

fn domain_tag(d: Domain) -> u8 {
    match d {
        Domain::Coefficient => 0,
        Domain::Evaluation => 1,
    }
}

fn domain_from_tag(t: u8) -> Result<Domain, HeError> {
    match t {
        0 => Ok(Domain::Coefficient),
        1 => Ok(Domain::Evaluation),
        other => Err(HeError::Serialization(format!("bad domain tag {other}"))),
    }
}

pub fn serialize_plaintext(pt: &Plaintext) -> Vec<u8> {
    let n = pt.poly.n();
    let mut buf = Vec::with_capacity(PLAINTEXT_HEADER_BYTES + 8 * n);
    put_u32(&mut buf, PLAINTEXT_MAGIC);
    buf.push(FORMAT_VERSION);
    buf.push(domain_tag(pt.poly.domain));
    buf.extend_from_slice(&[0u8; 2]);
    put_u32(&mut buf, n as u32);
    for &c in &pt.poly.coeffs {
        put_u64(&mut buf, c);
    }
    buf
}

pub fn deserialize_plaintext(buf: &[u8], p: u64) -> Result<Plaintext, HeError> {
    if buf.len() < PLAINTEXT_HEADER_BYTES || get_u32(buf, 0) != PLAINTEXT_MAGIC {
        return Err(HeError::Serialization("not a plaintext blob".into()));
    }
    let domain = domain_from_tag(buf[5])?;
    let n = get_u32(buf, 8) as usize;
    if buf.len() != PLAINTEXT_HEADER_BYTES + 8 * n {
        return Err(HeError::Serialization("plaintext length mismatch".into()));
    }
    let coeffs: Vec<u64> = (0..n).map(|i| get_u64(buf, PLAINTEXT_HEADER_BYTES + 8 * i)).collect();
    if coeffs.iter().any(|&c| c >= p) {
        return Err(HeError::Serialization("coefficient exceeds modulus".into()));
    }
    Ok(Plaintext { poly: Polynomial { coeffs, modulus: p, domain } })
}

pub fn serialize_ciphertext(ct: &Ciphertext, q: u64) -> Vec<u8> {
    let n = ct.c0.n();
    let mut buf = Vec::with_capacity(CIPHERTEXT_HEADER_BYTES + 16 * n);
    put_u32(&mut buf, CIPHERTEXT_MAGIC);
    buf.push(FORMAT_VERSION);
    buf.push(domain_tag(ct.domain()));
    buf.extend_from_slice(&[0u8; 2]);
    put_u32(&mut buf, n as u32);
    put_u32(&mut buf, ct.scale_tag as u32);
    put_u64(&mut buf, q);
    for &c in ct.c0.coeffs.iter().chain(&ct.c1.coeffs) {
        put_u64(&mut buf, c);
    }
    buf
}

pub fn deserialize_ciphertext(buf: &[u8]) -> Result<Ciphertext, HeError> {
    if buf.len() < CIPHERTEXT_HEADER_BYTES || get_u32(buf, 0) != CIPHERTEXT_MAGIC {
        return Err(HeError::Serialization("not a ciphertext blob".into()));
    }
    let domain = domain_from_tag(buf[5])?;
    let n = get_u32(buf, 8) as usize;
    let scale_tag = get_u32(buf, 12) as u64;
    let q = get_u64(buf, 16);
    if buf.len() != CIPHERTEXT_HEADER_BYTES + 16 * n {
        return Err(HeError::Serialization("ciphertext length mismatch".into()));
    }
    let word = |i: usize| get_u64(buf, CIPHERTEXT_HEADER_BYTES + 8 * i);
    let c0: Vec<u64> = (0..n).map(word).collect();
    let c1: Vec<u64> = (n..2 * n).map(word).collect();
    Ok(Ciphertext {
        c0: Polynomial { coeffs: c0, modulus: q, domain },
        c1: Polynomial { coeffs: c1, modulus: q, domain },
        scale_tag,
    })
}

/// Key file: header (magic, version, n, q, W, step list), then raw key
/// polynomials. The payload after the step list is exactly
/// `steps * 2 * n * 8 * l_ct` bytes.
pub fn serialize_galois_keys(keys: &GaloisKeySet) -> Vec<u8> {
    let mut buf = Vec::new();
    put_u32(&mut buf, GALOIS_KEY_MAGIC);
    buf.push(FORMAT_VERSION);
    buf.extend_from_slice(&[0u8; 3]);
    put_u32(&mut buf, keys.n as u32);
    put_u64(&mut buf, keys.q);
    put_u32(&mut buf, keys.w_bits);
    put_u32(&mut buf, keys.keys.len() as u32);
    for op in keys.keys.keys() {
        put_u32(&mut buf, op.shift as u32);
        put_u32(&mut buf, op.swap as u32);
    }
    for step in keys.keys.values() {
        for poly in step.ks_b.iter().chain(&step.ks_a) {
            for &c in &poly.coeffs {
                put_u64(&mut buf, c);
            }
        }
    }
    buf
}
