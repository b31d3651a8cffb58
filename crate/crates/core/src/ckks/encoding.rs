//! Canonical-embedding encoder for real slot vectors.
//!
//! Slot `j` of a polynomial `m(X)` of degree `< n` is `m(zeta^(5^j))` for
//! `zeta = exp(i*pi/n)`, `j < n/2`. With this ordering the ring automorphism
//! `X -> X^(5^r)` rotates slots left by `r`. Only real slot values are
//! used; the imaginary parts stay zero.

use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct Complex {
    re: f64,
    im: f64,
}

impl Complex {
    #[inline(always)]
    fn add(self, o: Self) -> Self {
        Self { re: self.re + o.re, im: self.im + o.im }
    }
    #[inline(always)]
    fn sub(self, o: Self) -> Self {
        Self { re: self.re - o.re, im: self.im - o.im }
    }
    #[inline(always)]
    fn mul(self, o: Self) -> Self {
        Self {
            re: self.re * o.re - self.im * o.im,
            im: self.re * o.im + self.im * o.re,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Encoder {
    n: usize,
    slots: usize,
    // 5^j mod 2n
    rot_group: Vec<usize>,
    // exp(2*pi*i*k / 2n), k in [0, 2n]
    roots: Vec<Complex>,
}

fn bit_reverse_in_place<T>(v: &mut [T]) {
    let n = v.len();
    let mut j = 0;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            v.swap(i, j);
        }
    }
}

impl Encoder {
    pub fn new(n: usize) -> Self {
        assert!(n.is_power_of_two() && n >= 4);
        let slots = n / 2;
        let m = 2 * n;
        let mut rot_group = Vec::with_capacity(slots);
        let mut g = 1usize;
        for _ in 0..slots {
            rot_group.push(g);
            g = (g * 5) % m;
        }
        let roots = (0..=m)
            .map(|k| {
                let a = 2.0 * PI * k as f64 / m as f64;
                Complex { re: a.cos(), im: a.sin() }
            })
            .collect();
        Self { n, slots, rot_group, roots }
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    /// Galois element `5^r mod 2n` for a left rotation by `r` slots.
    pub fn galois_element(&self, r: usize) -> usize {
        self.rot_group[r % self.slots]
    }

    // Evaluates the slot values from the packed half-size coefficient vector.
    fn fft_special(&self, vals: &mut [Complex]) {
        let size = vals.len();
        let m = 2 * self.n;
        bit_reverse_in_place(vals);
        let mut len = 2;
        while len <= size {
            let lenh = len >> 1;
            let lenq = len << 2;
            for i in (0..size).step_by(len) {
                for j in 0..lenh {
                    let idx = (self.rot_group[j] % lenq) * (m / lenq);
                    let u = vals[i + j];
                    let v = vals[i + j + lenh].mul(self.roots[idx]);
                    vals[i + j] = u.add(v);
                    vals[i + j + lenh] = u.sub(v);
                }
            }
            len <<= 1;
        }
    }

    fn fft_special_inv(&self, vals: &mut [Complex]) {
        let size = vals.len();
        let m = 2 * self.n;
        let mut len = size;
        while len >= 2 {
            let lenh = len >> 1;
            let lenq = len << 2;
            for i in (0..size).step_by(len) {
                for j in 0..lenh {
                    let idx = (lenq - (self.rot_group[j] % lenq)) * (m / lenq);
                    let u = vals[i + j].add(vals[i + j + lenh]);
                    let v = vals[i + j].sub(vals[i + j + lenh]).mul(self.roots[idx]);
                    vals[i + j] = u;
                    vals[i + j + lenh] = v;
                }
            }
            len >>= 1;
        }
        bit_reverse_in_place(vals);
        let inv = 1.0 / size as f64;
        for v in vals.iter_mut() {
            v.re *= inv;
            v.im *= inv;
        }
    }

    /// Real coefficient vector (unscaled) whose slots are `values`.
    pub fn embed_inverse(&self, values: &[f64]) -> Vec<f64> {
        assert_eq!(values.len(), self.slots);
        let mut vals: Vec<Complex> = values.iter().map(|&re| Complex { re, im: 0.0 }).collect();
        self.fft_special_inv(&mut vals);
        let half = self.n / 2;
        let mut coeffs = vec![0.0; self.n];
        for (i, v) in vals.iter().enumerate() {
            coeffs[i] = v.re;
            coeffs[i + half] = v.im;
        }
        coeffs
    }

    /// Real parts of the slot values of a real coefficient vector.
    pub fn embed(&self, coeffs: &[f64]) -> Vec<f64> {
        assert_eq!(coeffs.len(), self.n);
        let half = self.n / 2;
        let mut vals: Vec<Complex> = (0..self.slots)
            .map(|i| Complex { re: coeffs[i], im: coeffs[i + half] })
            .collect();
        self.fft_special(&mut vals);
        vals.into_iter().map(|c| c.re).collect()
    }
}
