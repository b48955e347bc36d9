//! Images `P = (Ω, c)`: a parallelogram domain plus an intensity source.
//!
//! Domains are stored as an origin and a frame `E = [e1 e2]` with `det E > 0`;
//! a point has local coordinates `(u, v) ∈ [0, 1]²` with `x = origin + E (u, v)`.
//! Axis-aligned rectangles are the common case (`E = diag(width, height)`).
//! Raster samples live in the local frame, so affine transforms of an image
//! never resample pixels.

mod pattern;
pub mod pnm;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::linalg::{self, det, inverse, Mat2, Vec2};
use crate::{Error, Result};

pub use pattern::{synthetic_image, Pattern};

/// Maximum number of intensity channels (`m ∈ {1, 3}`).
pub const MAX_CHANNELS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain2 {
    origin: Vec2,
    frame: Mat2,
}

impl Domain2 {
    pub fn rect(origin: Vec2, width: f64, height: f64) -> Result<Self> {
        if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "domain size must be positive, got {width} x {height}"
            )));
        }
        Self::from_frame(origin, Mat2::new(width, 0.0, 0.0, height))
    }

    /// The unit square `[0, 1]²`.
    pub fn unit() -> Self {
        Self {
            origin: Vec2::zeros(),
            frame: Mat2::identity(),
        }
    }

    pub fn from_frame(origin: Vec2, frame: Mat2) -> Result<Self> {
        let d = det(&frame);
        if !(d > 0.0) || !linalg::is_finite_mat(&frame) || !origin.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "domain frame must be finite with positive determinant (det = {d:e})"
            )));
        }
        Ok(Self { origin, frame })
    }

    pub fn origin(&self) -> Vec2 {
        self.origin
    }

    pub fn frame(&self) -> &Mat2 {
        &self.frame
    }

    pub fn edge1(&self) -> Vec2 {
        self.frame.column(0).into()
    }

    pub fn edge2(&self) -> Vec2 {
        self.frame.column(1).into()
    }

    pub fn width(&self) -> f64 {
        self.edge1().norm()
    }

    pub fn height(&self) -> f64 {
        self.edge2().norm()
    }

    pub fn area(&self) -> f64 {
        det(&self.frame)
    }

    /// Length of the longer diagonal.
    pub fn diameter(&self) -> f64 {
        let (a, b) = (self.edge1(), self.edge2());
        (a + b).norm().max((a - b).norm())
    }

    pub fn center(&self) -> Vec2 {
        self.from_local(0.5, 0.5)
    }

    /// Corners in positive cyclic order: origin, +e1, +e1+e2, +e2.
    pub fn corners(&self) -> [Vec2; 4] {
        let (o, a, b) = (self.origin, self.edge1(), self.edge2());
        [o, o + a, o + a + b, o + b]
    }

    pub fn is_axis_aligned(&self) -> bool {
        self.frame[(0, 1)] == 0.0 && self.frame[(1, 0)] == 0.0
    }

    pub fn from_local(&self, u: f64, v: f64) -> Vec2 {
        self.origin + self.frame * Vec2::new(u, v)
    }

    pub fn to_local(&self, x: Vec2) -> Vec2 {
        inverse(&self.frame) * (x - self.origin)
    }

    /// Clamp to the closed domain in local coordinates; also reports which
    /// local axes were clamped.
    pub fn clamp(&self, x: Vec2) -> (Vec2, [bool; 2]) {
        let l = self.to_local(x);
        let cu = l.x.clamp(0.0, 1.0);
        let cv = l.y.clamp(0.0, 1.0);
        let flags = [cu != l.x, cv != l.y];
        if flags[0] || flags[1] {
            (self.from_local(cu, cv), flags)
        } else {
            (x, flags)
        }
    }

    /// Membership in the closed domain with an absolute slack `tol`
    /// measured in local coordinates scaled by the diameter.
    pub fn contains(&self, x: Vec2, tol: f64) -> bool {
        let l = self.to_local(x);
        let t = tol / self.diameter();
        l.x >= -t && l.x <= 1.0 + t && l.y >= -t && l.y <= 1.0 + t
    }

    pub fn transformed(&self, t: &AffineMap2) -> Result<Self> {
        Self::from_frame(t.apply(self.origin), t.linear * self.frame)
    }
}

/// `x ↦ linear·x + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap2 {
    pub linear: Mat2,
    pub translation: Vec2,
}

impl AffineMap2 {
    pub fn new(linear: Mat2, translation: Vec2) -> Self {
        Self {
            linear,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Mat2::identity(), Vec2::zeros())
    }

    pub fn linear(m: Mat2) -> Self {
        Self::new(m, Vec2::zeros())
    }

    pub fn scaling(lambda: f64) -> Self {
        Self::linear(Mat2::identity() * lambda)
    }

    /// `x ↦ a + R(θ) x`.
    pub fn rigid(theta: f64, a: Vec2) -> Self {
        Self::new(linalg::rotation(theta), a)
    }

    /// Rotation by `theta` about `center`.
    pub fn rotation_about(theta: f64, center: Vec2) -> Self {
        let r = linalg::rotation(theta);
        Self::new(r, center - r * center)
    }

    pub fn apply(&self, x: Vec2) -> Vec2 {
        self.linear * x + self.translation
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &AffineMap2) -> AffineMap2 {
        Self::new(
            self.linear * inner.linear,
            self.linear * inner.translation + self.translation,
        )
    }

    pub fn det(&self) -> f64 {
        det(&self.linear)
    }

    pub fn inverse(&self) -> Result<AffineMap2> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return Err(Error::InvalidInput("affine map is not invertible".into()));
        }
        let li = inverse(&self.linear);
        Ok(Self::new(li, -(li * self.translation)))
    }
}

/// Intensity value with `channels ≤ MAX_CHANNELS` active entries; inactive entries are zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intensity {
    values: [f64; MAX_CHANNELS],
    channels: usize,
}

impl Intensity {
    pub fn zeros(channels: usize) -> Self {
        Self {
            values: [0.0; MAX_CHANNELS],
            channels,
        }
    }

    pub fn from_slice(v: &[f64]) -> Self {
        assert!(!v.is_empty() && v.len() <= MAX_CHANNELS, "1..=3 channels");
        let mut values = [0.0; MAX_CHANNELS];
        values[..v.len()].copy_from_slice(v);
        Self {
            values,
            channels: v.len(),
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values[..self.channels]
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values[..self.channels]
    }
}

/// A closed-form intensity map `R² → R^m`.
pub trait Field: Send + Sync + fmt::Debug {
    fn channels(&self) -> usize;

    /// Bounds `(lo, hi)` holding for every channel everywhere.
    fn range(&self) -> (f64, f64);

    fn eval(&self, p: Vec2, out: &mut [f64]);

    /// Value and spatial gradient per channel. The default uses central differences.
    fn eval_grad(&self, p: Vec2, out: &mut [f64], grad: &mut [Vec2]) {
        self.eval(p, out);
        let h = 1e-6 * (1.0 + p.norm());
        let m = self.channels();
        let mut fp = [0.0; MAX_CHANNELS];
        let mut fm = [0.0; MAX_CHANNELS];
        for axis in 0..2 {
            let mut e = Vec2::zeros();
            e[axis] = h;
            self.eval(p + e, &mut fp[..m]);
            self.eval(p - e, &mut fm[..m]);
            for k in 0..m {
                grad[k][axis] = (fp[k] - fm[k]) / (2.0 * h);
            }
        }
    }
}

/// Adapter turning a closure into a [`Field`].
pub struct FnField<F> {
    channels: usize,
    range: (f64, f64),
    f: F,
}

impl<F> FnField<F>
where
    F: Fn(Vec2, &mut [f64]) + Send + Sync,
{
    pub fn new(channels: usize, range: (f64, f64), f: F) -> Self {
        Self { channels, range, f }
    }
}

impl<F> fmt::Debug for FnField<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnField")
            .field("channels", &self.channels)
            .field("range", &self.range)
            .finish_non_exhaustive()
    }
}

impl<F> Field for FnField<F>
where
    F: Fn(Vec2, &mut [f64]) + Send + Sync,
{
    fn channels(&self) -> usize {
        self.channels
    }

    fn range(&self) -> (f64, f64) {
        self.range
    }

    fn eval(&self, p: Vec2, out: &mut [f64]) {
        (self.f)(p, out)
    }
}

/// Samples at pixel centres, row-major, channel-interleaved, normalised to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Raster {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput("raster must be non-empty".into()));
        }
        if !(channels == 1 || channels == 3) {
            return Err(Error::InvalidInput(format!(
                "raster must have 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::InvalidInput(format!(
                "raster data has {} values, expected {}",
                data.len(),
                width * height * channels
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "raster sample {bad} is not finite"
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, &mut [f64]),
    ) -> Result<Self> {
        let mut data = vec![0.0; width * height * channels];
        for j in 0..height {
            for i in 0..width {
                let base = (j * width + i) * channels;
                f(i, j, &mut data[base..base + channels]);
            }
        }
        Self::new(width, height, channels, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, i: usize, j: usize) -> &[f64] {
        let base = (j * self.width + i) * self.channels;
        &self.data[base..base + self.channels]
    }

    pub fn range(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Separable Gaussian blur with standard deviation `sigma` in local
    /// coordinates, edges clamped. Widths under a third of a pixel are skipped.
    pub fn blurred(&self, sigma: f64) -> Raster {
        let mut data = self.data.clone();
        for (len, along_x) in [(self.width, true), (self.height, false)] {
            let s = sigma * len as f64;
            if s < 1.0 / 3.0 {
                continue;
            }
            let radius = (3.0 * s).ceil() as isize;
            let kernel: Vec<f64> = (-radius..=radius)
                .map(|d| (-((d * d) as f64) / (2.0 * s * s)).exp())
                .collect();
            let total: f64 = kernel.iter().sum();
            let lines = if along_x { self.height } else { self.width };
            let index = |line: usize, at: usize| {
                let (i, j) = if along_x { (at, line) } else { (line, at) };
                (j * self.width + i) * self.channels
            };
            let src = data.clone();
            for line in 0..lines {
                for at in 0..len {
                    let dst = index(line, at);
                    for k in 0..self.channels {
                        let acc: f64 = kernel
                            .iter()
                            .zip(-radius..=radius)
                            .map(|(w, d)| {
                                w * src[index(
                                    line,
                                    (at as isize + d).clamp(0, len as isize - 1) as usize,
                                ) + k]
                            })
                            .sum();
                        data[dst + k] = acc / total;
                    }
                }
            }
        }
        Raster {
            data,
            ..self.clone()
        }
    }

    /// Bilinear interpolation in local coordinates; writes values and the
    /// derivative with respect to `(u, v)` per channel.
    fn sample_local(&self, u: f64, v: f64, out: &mut [f64], dlocal: &mut [Vec2]) {
        let (i0, fx, dx) = axis_weights(u, self.width);
        let (j0, fy, dy) = axis_weights(v, self.height);
        let i1 = (i0 + 1).min(self.width - 1);
        let j1 = (j0 + 1).min(self.height - 1);
        for k in 0..self.channels {
            let p00 = self.pixel(i0, j0)[k];
            let p10 = self.pixel(i1, j0)[k];
            let p01 = self.pixel(i0, j1)[k];
            let p11 = self.pixel(i1, j1)[k];
            let top = p00 + fx * (p10 - p00);
            let bottom = p01 + fx * (p11 - p01);
            out[k] = top + fy * (bottom - top);
            let du = ((p10 - p00) + fy * ((p11 - p01) - (p10 - p00))) * dx;
            let dv = (bottom - top) * dy;
            dlocal[k] = Vec2::new(du, dv);
        }
    }
}

/// Base index, fractional weight and `d(pixel coordinate)/d(local coordinate)`
/// (zero where clamped) along one raster axis.
fn axis_weights(t: f64, n: usize) -> (usize, f64, f64) {
    if n == 1 {
        return (0, 0.0, 0.0);
    }
    let p = t * n as f64 - 0.5;
    let max = (n - 1) as f64;
    if p <= 0.0 {
        return (0, 0.0, if p == 0.0 { n as f64 } else { 0.0 });
    }
    if p >= max {
        return (n - 2, 1.0, if p == max { n as f64 } else { 0.0 });
    }
    let i0 = (p.floor() as usize).min(n - 2);
    (i0, p - i0 as f64, n as f64)
}

/// Analytic intensity `c(x) = field(pullback(x))`.
#[derive(Debug, Clone)]
pub struct AnalyticSource {
    field: Arc<dyn Field>,
    pullback: AffineMap2,
}

impl AnalyticSource {
    pub fn new(field: Arc<dyn Field>) -> Self {
        Self {
            field,
            pullback: AffineMap2::identity(),
        }
    }

    pub fn field(&self) -> &Arc<dyn Field> {
        &self.field
    }

    pub fn pullback(&self) -> &AffineMap2 {
        &self.pullback
    }
}

#[derive(Debug, Clone)]
pub enum IntensitySource {
    Raster(Raster),
    Analytic(AnalyticSource),
}

impl IntensitySource {
    pub fn channels(&self) -> usize {
        match self {
            IntensitySource::Raster(r) => r.channels(),
            IntensitySource::Analytic(a) => a.field.channels(),
        }
    }

    /// Bounds on every channel value.
    pub fn range(&self) -> (f64, f64) {
        match self {
            IntensitySource::Raster(r) => r.range(),
            IntensitySource::Analytic(a) => a.field.range(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Image {
    domain: Domain2,
    source: IntensitySource,
}

impl Image {
    pub fn new(domain: Domain2, source: IntensitySource) -> Result<Self> {
        let m = source.channels();
        if !(m == 1 || m == 3) {
            return Err(Error::InvalidInput(format!(
                "images carry 1 or 3 channels, got {m}"
            )));
        }
        let (lo, hi) = source.range();
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::InvalidInput(
                "intensity source must be bounded".into(),
            ));
        }
        Ok(Self { domain, source })
    }

    pub fn from_raster(domain: Domain2, raster: Raster) -> Result<Self> {
        Self::new(domain, IntensitySource::Raster(raster))
    }

    pub fn from_field(domain: Domain2, field: Arc<dyn Field>) -> Result<Self> {
        Self::new(
            domain,
            IntensitySource::Analytic(AnalyticSource::new(field)),
        )
    }

    /// Raster intensities blurred by `sigma` local units; analytic sources unchanged.
    pub fn smoothed(&self, sigma: f64) -> Image {
        match &self.source {
            IntensitySource::Raster(r) if sigma > 0.0 => Image {
                domain: self.domain,
                source: IntensitySource::Raster(r.blurred(sigma)),
            },
            _ => self.clone(),
        }
    }

    pub fn domain(&self) -> &Domain2 {
        &self.domain
    }

    pub fn source(&self) -> &IntensitySource {
        &self.source
    }

    pub fn channels(&self) -> usize {
        self.source.channels()
    }

    /// Intensity at `x`; points outside the closed domain are clamped onto it.
    pub fn sample(&self, x: Vec2) -> Result<Intensity> {
        if !(x.x.is_finite() && x.y.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "sample point ({}, {}) is not finite",
                x.x, x.y
            )));
        }
        Ok(self.sample_with_gradient(x).0)
    }

    /// Intensity and its spatial gradient per channel at a finite point.
    pub fn sample_with_gradient(&self, x: Vec2) -> (Intensity, [Vec2; MAX_CHANNELS]) {
        let m = self.channels();
        let mut value = Intensity::zeros(m);
        let mut grad = [Vec2::zeros(); MAX_CHANNELS];
        let (xc, clamped) = self.domain.clamp(x);
        match &self.source {
            IntensitySource::Raster(r) => {
                let l = self.domain.to_local(xc);
                let mut dl = [Vec2::zeros(); MAX_CHANNELS];
                r.sample_local(
                    l.x.clamp(0.0, 1.0),
                    l.y.clamp(0.0, 1.0),
                    value.as_mut_slice(),
                    &mut dl[..m],
                );
                let jt = inverse(self.domain.frame()).transpose();
                for k in 0..m {
                    let mut d = dl[k];
                    if clamped[0] {
                        d.x = 0.0;
                    }
                    if clamped[1] {
                        d.y = 0.0;
                    }
                    grad[k] = jt * d;
                }
            }
            IntensitySource::Analytic(a) => {
                let z = a.pullback.apply(xc);
                a.field.eval_grad(z, value.as_mut_slice(), &mut grad[..m]);
                let lt = a.pullback.linear.transpose();
                let any_clamped = clamped[0] || clamped[1];
                let frame = self.domain.frame();
                let jt = inverse(frame).transpose();
                for g in grad.iter_mut().take(m) {
                    *g = lt * *g;
                    if any_clamped {
                        // Zero the derivative along clamped local axes.
                        let mut d = frame.transpose() * *g;
                        if clamped[0] {
                            d.x = 0.0;
                        }
                        if clamped[1] {
                            d.y = 0.0;
                        }
                        *g = jt * d;
                    }
                }
            }
        }
        (value, grad)
    }
}

/// `P′ = (T(Ω), c ∘ T⁻¹)`.
pub fn transform_image(img: &Image, t: &AffineMap2) -> Result<Image> {
    if !(t.det() > 0.0) {
        return Err(Error::InvalidInput(format!(
            "transform must have positive determinant, got {:e}",
            t.det()
        )));
    }
    let domain = img.domain.transformed(t)?;
    let source = match &img.source {
        IntensitySource::Raster(r) => IntensitySource::Raster(r.clone()),
        IntensitySource::Analytic(a) => IntensitySource::Analytic(AnalyticSource {
            field: Arc::clone(&a.field),
            pullback: a.pullback.compose(&t.inverse()?),
        }),
    };
    Image::new(domain, source)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{mat2, vec2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn blur_keeps_constants_and_range_and_spreads_a_spike() {
        let flat = Raster::new(8, 6, 3, vec![0.4; 8 * 6 * 3]).unwrap();
        assert!(flat
            .blurred(0.2)
            .data()
            .iter()
            .all(|v| (v - 0.4).abs() < 1e-15));
        let spike =
            Raster::from_fn(16, 16, 1, |i, j, out| out[0] = f64::from(i == 8 && j == 8)).unwrap();
        assert_eq!(spike.blurred(0.01), spike);
        let b = spike.blurred(0.1);
        let (lo, hi) = b.range();
        assert!(lo >= 0.0 && hi < 1.0 && hi == b.pixel(8, 8)[0]);
        assert!((b.pixel(7, 8)[0] - b.pixel(9, 8)[0]).abs() < 1e-15);
        assert!((b.data().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    fn sin_cos_image() -> Image {
        let f = FnField::new(1, (-1.0, 1.0), |p: Vec2, out: &mut [f64]| {
            out[0] = (3.0 * p.x).sin() * (2.0 * p.y).cos()
        });
        Image::from_field(Domain2::unit(), Arc::new(f)).unwrap()
    }

    #[test]
    fn constant_raster_samples_constant() {
        let r = Raster::new(3, 2, 1, vec![0.5; 6]).unwrap();
        let img = Image::from_raster(Domain2::unit(), r).unwrap();
        for x in [
            vec2(0.0, 0.0),
            vec2(0.3, 0.71),
            vec2(1.0, 1.0),
            vec2(2.0, -1.0),
        ] {
            assert_eq!(img.sample(x).unwrap().as_slice(), &[0.5]);
        }
    }

    #[test]
    fn analytic_first_coordinate() {
        let f = FnField::new(1, (0.0, 1.0), |p: Vec2, out: &mut [f64]| out[0] = p.x);
        let img = Image::from_field(Domain2::unit(), Arc::new(f)).unwrap();
        assert_eq!(img.sample(vec2(0.25, 0.9)).unwrap().as_slice(), &[0.25]);
    }

    #[test]
    fn bilinear_midpoint_of_two_by_two() {
        // corner values {0, 1, 1, 0}: hand-evaluated bilinear mean is 0.5
        let r = Raster::new(2, 2, 1, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let img = Image::from_raster(Domain2::unit(), r).unwrap();
        assert!((img.sample(vec2(0.5, 0.5)).unwrap().as_slice()[0] - 0.5).abs() < 1e-15);
        // pixel centres reproduce pixel values
        assert_eq!(img.sample(vec2(0.25, 0.25)).unwrap().as_slice(), &[0.0]);
        assert_eq!(img.sample(vec2(0.75, 0.25)).unwrap().as_slice(), &[1.0]);
    }

    #[test]
    fn non_finite_point_is_rejected() {
        let img = sin_cos_image();
        assert!(matches!(
            img.sample(vec2(f64::NAN, 0.0)),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn raster_gradient_matches_differences_inside_a_cell() {
        let r = Raster::from_fn(5, 4, 3, |i, j, px| {
            for (k, v) in px.iter_mut().enumerate() {
                *v = ((i * 7 + j * 3 + k * 5) % 11) as f64 / 10.0;
            }
        })
        .unwrap();
        let dom = Domain2::from_frame(vec2(0.2, -0.1), mat2(1.5, 0.3, -0.2, 1.1)).unwrap();
        let img = Image::from_raster(dom, r).unwrap();
        let x = dom.from_local(0.37, 0.41);
        let (_, g) = img.sample_with_gradient(x);
        let h = 1e-7;
        for axis in 0..2 {
            let mut e = Vec2::zeros();
            e[axis] = h;
            let p = img.sample(x + e).unwrap();
            let m = img.sample(x - e).unwrap();
            for k in 0..3 {
                let fd = (p.as_slice()[k] - m.as_slice()[k]) / (2.0 * h);
                assert!((fd - g[k][axis]).abs() < 1e-6, "{fd} vs {}", g[k][axis]);
            }
        }
    }

    #[test]
    fn identity_transform_keeps_image() {
        let img = sin_cos_image();
        let out = transform_image(&img, &AffineMap2::identity()).unwrap();
        assert_eq!(out.domain(), img.domain());
        let x = vec2(0.3, 0.6);
        assert_eq!(out.sample(x).unwrap(), img.sample(x).unwrap());
    }

    #[test]
    fn scaling_by_two_doubles_domain() {
        let img = sin_cos_image();
        let out = transform_image(&img, &AffineMap2::scaling(2.0)).unwrap();
        assert_eq!(out.domain().corners()[2], vec2(2.0, 2.0));
        let x = vec2(0.3, 0.6);
        let a = out.sample(2.0 * x).unwrap().as_slice()[0];
        let b = img.sample(x).unwrap().as_slice()[0];
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn rotation_about_centre_is_pointwise_exact() {
        let img = sin_cos_image();
        let t = AffineMap2::rotation_about(0.7, img.domain().center());
        let out = transform_image(&img, &t).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let x = vec2(rng.gen(), rng.gen());
            let a = out.sample(t.apply(x)).unwrap().as_slice()[0];
            let b = img.sample(x).unwrap().as_slice()[0];
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn singular_transform_is_rejected() {
        let img = sin_cos_image();
        let t = AffineMap2::linear(mat2(1.0, 0.0, 0.0, -1.0));
        assert!(matches!(
            transform_image(&img, &t),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn clamping_outside_domain() {
        let img = sin_cos_image();
        let a = img.sample(vec2(1.5, 0.5)).unwrap();
        let b = img.sample(vec2(1.0, 0.5)).unwrap();
        assert_eq!(a, b);
    }
}
