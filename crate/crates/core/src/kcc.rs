//! Kernel cross-correlator (KCC).
//!
//! A correlator is trained on one patch `z` and answers how similar another
//! patch `x` is, up to a cyclic translation. Everything is element-wise in
//! the frequency domain:
//!
//! * kernel field: `k(x, z) = exp(-max(0, |x|^2 + |z|^2 - 2 F^-1(X . conj(Z))) / N / sigma^2)`,
//!   i.e. the Gaussian kernel between `x` and every cyclic shift of `z`;
//! * training (`x = z`): `H* = G / (F(k(z, z)) + lambda)` with a delta target `g`;
//! * response: `F^-1(F(k(x, z)) . H*)`, whose maximum is the similarity.

use std::fs;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::imaging::{ComplexSpectrum, Fft2d, FftWork, GrayImage, RealField};

#[derive(Clone, Debug, PartialEq)]
pub struct KernelParams {
    /// Gaussian kernel bandwidth on the per-pixel squared distance.
    pub sigma_k: f64,
    /// Ridge regularizer.
    pub lambda: f64,
    /// Side of the square patches fed to the correlator (power of two).
    pub patch_side: usize,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            sigma_k: 0.1,
            lambda: 1e-4,
            patch_side: 64,
        }
    }
}

impl KernelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_k > 0.0) || !self.sigma_k.is_finite() {
            return Err(Error::param("sigma_k", "must be positive"));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::param("lambda", "must be positive"));
        }
        if !self.patch_side.is_power_of_two() {
            return Err(Error::param(
                "patch_side",
                format!("must be a power of two, got {}", self.patch_side),
            ));
        }
        Ok(())
    }
}

/// Correlator input: a real field with its spectrum and squared norm cached.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    values: RealField,
    spectrum: ComplexSpectrum,
    norm_sq: f64,
}

impl Patch {
    /// Wraps raw values without any normalization.
    pub fn from_field(values: RealField) -> Result<Self> {
        let (w, h) = values.dims();
        let plan = Fft2d::new(w, h)?;
        let mut buf: Vec<Complex64> = values
            .data()
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect();
        plan.forward(&mut buf);
        let norm_sq = values.data().iter().map(|v| v * v).sum();
        Ok(Self {
            spectrum: ComplexSpectrum::from_parts(w, h, buf),
            values,
            norm_sq,
        })
    }

    pub fn values(&self) -> &RealField {
        &self.values
    }

    pub fn spectrum(&self) -> &ComplexSpectrum {
        &self.spectrum
    }

    pub fn norm_sq(&self) -> f64 {
        self.norm_sq
    }

    pub fn dims(&self) -> (usize, usize) {
        self.values.dims()
    }
}

/// Symmetric Hann window of length `n`; both ends are zero.
fn hann(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Normalizes an arbitrary crop into a `side x side` correlator patch:
/// resample, scale intensities to unit range, remove the window-weighted
/// mean and apply a 2-D Hann window. The result has zero mean.
pub fn preprocess(raw: &GrayImage, side: usize) -> Result<Patch> {
    if side == 0 {
        return Err(Error::param("patch_side", "must be positive"));
    }
    let resized = raw.resize_area(side, side);
    let win = hann(side);
    let weight = |x: usize, y: usize| win[x] * win[y];
    let mut wsum = 0.0;
    let mut vsum = 0.0;
    for y in 0..side {
        for x in 0..side {
            let w = weight(x, y);
            wsum += w;
            vsum += w * resized.get(x, y) / 255.0;
        }
    }
    let mean = if wsum > 0.0 { vsum / wsum } else { 0.0 };
    let values = GrayImage::from_fn(side, side, |x, y| {
        weight(x, y) * (resized.get(x, y) / 255.0 - mean)
    });
    Patch::from_field(values)
}

// exp(x) for a slice of non-positive arguments, written without branches
// or libm calls so the loop vectorizes. Arguments below -700 flush to
// exp(-700). Relative error stays below 1e-14.
fn exp_nonpositive_in_place(values: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma")
        {
            // SAFETY: the required CPU features were detected above.
            unsafe { exp_nonpositive_avx2(values) };
            return;
        }
    }
    exp_nonpositive_generic(values);
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn exp_nonpositive_avx2(values: &mut [f64]) {
    exp_nonpositive_generic(values);
}

#[inline(always)]
fn exp_nonpositive_generic(values: &mut [f64]) {
    const LOG2E: f64 = std::f64::consts::LOG2_E;
    const LN2_HI: f64 = 6.931_471_803_691_238_2e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
    // 1.5 * 2^52: adding it rounds to an integer held in the low mantissa
    // bits, so the bit pattern of the sum minus that of the constant is k.
    const SHIFTER: f64 = 6_755_399_441_055_744.0;
    const SHIFTER_BITS: u64 = 0x4338_0000_0000_0000;
    for v in values.iter_mut() {
        let x = v.max(-700.0);
        let t = x * LOG2E + SHIFTER;
        let k = t - SHIFTER;
        let r = (x - k * LN2_HI) - k * LN2_LO;
        // Taylor series to r^13; |r| <= ln2 / 2.
        let mut p = 1.0 / 6_227_020_800.0;
        p = p * r + 1.0 / 479_001_600.0;
        p = p * r + 1.0 / 39_916_800.0;
        p = p * r + 1.0 / 3_628_800.0;
        p = p * r + 1.0 / 362_880.0;
        p = p * r + 1.0 / 40_320.0;
        p = p * r + 1.0 / 5_040.0;
        p = p * r + 1.0 / 720.0;
        p = p * r + 1.0 / 120.0;
        p = p * r + 1.0 / 24.0;
        p = p * r + 1.0 / 6.0;
        p = p * r + 0.5;
        p = p * r + 1.0;
        p = p * r + 1.0;
        let biased = t.to_bits().wrapping_sub(SHIFTER_BITS).wrapping_add(1023);
        *v = p * f64::from_bits(biased << 52);
    }
}

fn check_dims(expected: (usize, usize), actual: (usize, usize)) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

// Writes exp(-d / sigma^2) for every cyclic shift into `out` as complex
// values with zero imaginary part.
#[allow(clippy::too_many_arguments)]
fn kernel_into(
    plan: &Fft2d,
    work: &mut FftWork,
    x_hat: &[Complex64],
    x_norm_sq: f64,
    z_hat: &[Complex64],
    z_norm_sq: f64,
    sigma_k: f64,
    out: &mut [Complex64],
) {
    for ((o, a), b) in out.iter_mut().zip(x_hat).zip(z_hat) {
        *o = a * b.conj();
    }
    plan.inverse_unscaled_with(out, work);
    let (scale, offset) = exponent_coefficients(out.len(), x_norm_sq, z_norm_sq, sigma_k);
    for o in out.iter_mut() {
        *o = Complex64::new((o.re * scale - offset).min(0.0), 0.0);
    }
    exp_nonpositive_in_place(as_f64_mut(out));
    for o in out.iter_mut() {
        o.im = 0.0;
    }
}

// With `s` the unnormalized inverse transform of x_hat * conj(z_hat), the
// kernel exponent is -max(0, (|x|^2 + |z|^2 - 2 s / N) / N) / sigma^2,
// which equals min(0, s * scale - offset). The offset is pulled in by a
// relative 1e-12 so that rounding residue of the cancellation at a perfect
// alignment clamps to exactly zero instead of a tiny negative exponent.
fn exponent_coefficients(n: usize, x_norm_sq: f64, z_norm_sq: f64, sigma_k: f64) -> (f64, f64) {
    const CANCELLATION_SLACK: f64 = 1.0 - 1e-12;
    let n = n as f64;
    let inv_s2 = 1.0 / (sigma_k * sigma_k);
    (
        2.0 * inv_s2 / (n * n),
        (x_norm_sq + z_norm_sq) * inv_s2 / n * CANCELLATION_SLACK,
    )
}

// Complex64 is two packed f64 values (`#[repr(C)]`); the exponent is applied
// to both lanes and the imaginary lanes are reset by the caller.
fn as_f64_mut(buf: &mut [Complex64]) -> &mut [f64] {
    let len = buf.len() * 2;
    // SAFETY: num_complex::Complex<f64> is #[repr(C)] { re: f64, im: f64 }.
    unsafe { std::slice::from_raw_parts_mut(buf.as_mut_ptr() as *mut f64, len) }
}

/// Gaussian kernel between `x` and every cyclic shift of the patch whose
/// spectrum is `z_hat`. Element `(i, j)` compares `x` with `z` shifted by
/// `(i, j)`.
pub fn kernel_correlation(
    x: &Patch,
    z_hat: &ComplexSpectrum,
    z_norm_sq: f64,
    kp: &KernelParams,
) -> Result<RealField> {
    check_dims(z_hat.dims(), x.dims())?;
    let (w, h) = x.dims();
    let plan = Fft2d::new(w, h)?;
    let mut buf = vec![Complex64::default(); w * h];
    kernel_into(
        &plan,
        &mut FftWork::default(),
        x.spectrum.data(),
        x.norm_sq,
        z_hat.data(),
        z_norm_sq,
        kp.sigma_k,
        &mut buf,
    );
    Ok(RealField::from_parts(
        w,
        h,
        buf.iter().map(|c| c.re).collect(),
    ))
}

/// Desired correlation output: a unit impulse at the origin.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetResponse {
    pub g: RealField,
    pub g_hat: ComplexSpectrum,
}

impl TargetResponse {
    pub fn delta(width: usize, height: usize) -> Self {
        let mut g = GrayImage::filled(width, height, 0.0);
        g.set(0, 0, 1.0);
        // The spectrum of the origin impulse is identically one.
        let g_hat = ComplexSpectrum::from_parts(
            width,
            height,
            vec![Complex64::new(1.0, 0.0); width * height],
        );
        Self { g, g_hat }
    }
}

/// A trained correlator for one patch.
#[derive(Clone, Debug, PartialEq)]
pub struct Correlator {
    pub h_hat_conj: ComplexSpectrum,
    pub z_hat: ComplexSpectrum,
    pub z_norm_sq: f64,
    pub params: KernelParams,
}

/// Similarity of a patch to a correlator's training patch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Response {
    pub zeta: f64,
    /// Cyclic offset of the response peak, each component in `[-n/2, n/2)`.
    pub peak: (isize, isize),
}

/// Closed-form ridge solution with the training patch as its own input.
pub fn train(z: &Patch, kp: &KernelParams) -> Result<Correlator> {
    let (w, h) = z.dims();
    let plan = Fft2d::new(w, h)?;
    let mut k_hat = vec![Complex64::default(); w * h];
    let mut work = FftWork::default();
    kernel_into(
        &plan,
        &mut work,
        z.spectrum.data(),
        z.norm_sq,
        z.spectrum.data(),
        z.norm_sq,
        kp.sigma_k,
        &mut k_hat,
    );
    plan.forward_with(&mut k_hat, &mut work);
    let target = TargetResponse::delta(w, h);
    let mut h_hat = Vec::with_capacity(w * h);
    for (g, k) in target.g_hat.data().iter().zip(&k_hat) {
        let v = g / (k + kp.lambda);
        if !v.re.is_finite() || !v.im.is_finite() {
            return Err(Error::format("correlator", "non-finite filter coefficient"));
        }
        h_hat.push(v);
    }
    Ok(Correlator {
        h_hat_conj: ComplexSpectrum::from_parts(w, h, h_hat),
        z_hat: z.spectrum.clone(),
        z_norm_sq: z.norm_sq,
        params: kp.clone(),
    })
}

/// Evaluates the correlator on `x` and reports the response maximum.
pub fn respond(c: &Correlator, x: &Patch) -> Result<Response> {
    let (w, h) = x.dims();
    ResponseWorkspace::new(w, h)?.respond(c, x)
}

/// Plan and scratch buffers for evaluating many correlators of one size.
pub struct ResponseWorkspace {
    plan: Fft2d,
    work: FftWork,
    buf: Vec<Complex64>,
    mixed: Vec<Complex64>,
}

impl ResponseWorkspace {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        Ok(Self {
            plan: Fft2d::new(width, height)?,
            work: FftWork::default(),
            buf: vec![Complex64::default(); width * height],
            mixed: vec![Complex64::default(); width * height],
        })
    }

    fn check(&self, c: &Correlator, x: &Patch) -> Result<()> {
        check_dims(self.plan.dims(), x.dims())?;
        check_dims(self.plan.dims(), c.z_hat.dims())
    }

    pub fn respond(&mut self, c: &Correlator, x: &Patch) -> Result<Response> {
        self.check(c, x)?;
        kernel_into(
            &self.plan,
            &mut self.work,
            x.spectrum.data(),
            x.norm_sq,
            c.z_hat.data(),
            c.z_norm_sq,
            c.params.sigma_k,
            &mut self.buf,
        );
        self.plan.forward_with(&mut self.buf, &mut self.work);
        for (b, f) in self.buf.iter_mut().zip(c.h_hat_conj.data()) {
            *b *= f;
        }
        self.plan
            .inverse_unscaled_with(&mut self.buf, &mut self.work);
        let inv_n = 1.0 / self.buf.len() as f64;
        Ok(peak_of(self.buf.iter().map(|v| v.re), self.plan.dims()).scaled(inv_n))
    }

    /// Evaluates two correlators against the same patch with one set of
    /// transforms. Both kernel fields are real, so they travel as the real
    /// and imaginary parts of a single complex field and are separated in
    /// the frequency domain by conjugate symmetry.
    pub fn respond_pair(
        &mut self,
        a: &Correlator,
        b: &Correlator,
        x: &Patch,
    ) -> Result<(Response, Response)> {
        self.check(a, x)?;
        self.check(b, x)?;
        let (w, h) = self.plan.dims();
        let i = Complex64::i();

        for (((o, xv), za), zb) in self
            .buf
            .iter_mut()
            .zip(x.spectrum.data())
            .zip(a.z_hat.data())
            .zip(b.z_hat.data())
        {
            *o = xv * (za.conj() + i * zb.conj());
        }
        self.plan
            .inverse_unscaled_with(&mut self.buf, &mut self.work);
        let n = w * h;
        let (scale_a, offset_a) =
            exponent_coefficients(n, x.norm_sq, a.z_norm_sq, a.params.sigma_k);
        let (scale_b, offset_b) =
            exponent_coefficients(n, x.norm_sq, b.z_norm_sq, b.params.sigma_k);
        for o in self.buf.iter_mut() {
            *o = Complex64::new(
                (o.re * scale_a - offset_a).min(0.0),
                (o.im * scale_b - offset_b).min(0.0),
            );
        }
        exp_nonpositive_in_place(as_f64_mut(&mut self.buf));
        self.plan.forward_with(&mut self.buf, &mut self.work);

        // Spectrum Y of the packed field gives K_a = (Y(k) + conj Y(-k)) / 2
        // and K_b = (Y(k) - conj Y(-k)) / 2i. The mixed spectrum
        // K_a H_a + i K_b H_b then carries both responses as real and
        // imaginary parts.
        let ha = a.h_hat_conj.data();
        let hb = b.h_hat_conj.data();
        for v in 0..h {
            let nv = if v == 0 { 0 } else { h - v };
            let row = &self.buf[v * w..(v + 1) * w];
            let mirror = &self.buf[nv * w..(nv + 1) * w];
            let out = &mut self.mixed[v * w..(v + 1) * w];
            let ha = &ha[v * w..(v + 1) * w];
            let hb = &hb[v * w..(v + 1) * w];
            for u in 0..w {
                let nu = if u == 0 { 0 } else { w - u };
                let y = row[u];
                let ym = mirror[nu].conj();
                let ka = (y + ym) * 0.5;
                let kb = (y - ym) * Complex64::new(0.0, -0.5);
                out[u] = ka * ha[u] + i * (kb * hb[u]);
            }
        }
        self.plan
            .inverse_unscaled_with(&mut self.mixed, &mut self.work);
        let dims = self.plan.dims();
        let inv_n = 1.0 / n as f64;
        Ok((
            peak_of(self.mixed.iter().map(|v| v.re), dims).scaled(inv_n),
            peak_of(self.mixed.iter().map(|v| v.im), dims).scaled(inv_n),
        ))
    }
}

impl Response {
    fn scaled(self, factor: f64) -> Self {
        Self {
            zeta: self.zeta * factor,
            ..self
        }
    }
}

fn peak_of(values: impl Iterator<Item = f64>, (w, h): (usize, usize)) -> Response {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.enumerate() {
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    let wrap = |i: usize, n: usize| {
        let (i, n) = (i as isize, n as isize);
        if i >= (n + 1) / 2 {
            i - n
        } else {
            i
        }
    };
    Response {
        zeta: best_v,
        peak: (wrap(best % w, w), wrap(best / w, h)),
    }
}

const MAGIC: &[u8; 4] = b"KCCR";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 3 * 8;

impl Correlator {
    pub fn side(&self) -> usize {
        self.z_hat.width()
    }

    /// Size in bytes of [`Correlator::to_bytes`] for a side-`p` correlator.
    pub fn serialized_len_for(p: usize) -> usize {
        HEADER_LEN + 2 * p * p * 16
    }

    pub fn serialized_len(&self) -> usize {
        Self::serialized_len_for(self.side())
    }

    /// Flat little-endian record: magic, version (u32), side (u32),
    /// sigma_k, lambda, |z|^2, then the interleaved filter spectrum followed
    /// by the training spectrum, all as f64.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let (w, h) = self.z_hat.dims();
        if w != h {
            return Err(Error::param(
                "correlator",
                "only square correlators serialize",
            ));
        }
        let mut out = Vec::with_capacity(self.serialized_len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(w as u32).to_le_bytes());
        for v in [self.params.sigma_k, self.params.lambda, self.z_norm_sq] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for c in self.h_hat_conj.data().iter().chain(self.z_hat.data()) {
            out.extend_from_slice(&c.re.to_le_bytes());
            out.extend_from_slice(&c.im.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(Error::format("correlator", "bad magic"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u32_at(4);
        if version != VERSION {
            return Err(Error::format(
                "correlator",
                format!("unsupported version {version}"),
            ));
        }
        let p = u32_at(8) as usize;
        if p == 0 || bytes.len() != Self::serialized_len_for(p) {
            return Err(Error::format("correlator", "length does not match side"));
        }
        let params = KernelParams {
            sigma_k: f64_at(12),
            lambda: f64_at(20),
            patch_side: p,
        };
        let z_norm_sq = f64_at(28);
        let n = p * p;
        let read = |start: usize| -> Vec<Complex64> {
            (0..n)
                .map(|i| {
                    let o = start + 16 * i;
                    Complex64::new(f64_at(o), f64_at(o + 8))
                })
                .collect()
        };
        let h = read(HEADER_LEN);
        let z = read(HEADER_LEN + 16 * n);
        let all_finite = h
            .iter()
            .chain(&z)
            .all(|c| c.re.is_finite() && c.im.is_finite());
        if !all_finite || !z_norm_sq.is_finite() {
            return Err(Error::format("correlator", "non-finite values"));
        }
        Ok(Self {
            h_hat_conj: ComplexSpectrum::from_parts(p, p, h),
            z_hat: ComplexSpectrum::from_parts(p, p, z),
            z_norm_sq,
            params,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
