//! Brownian motion in the cube [−1,1]^d: exit times, harmonic measure and
//! the kernel q(x̃,ỹ) = ∫ |ỹ − z̃|^{2−d} ω(x̃, dz̃).
//!
//! Paths are standard Brownian motion (covariance I per unit time). The
//! Euler sampler monitors the path on a grid of mesh dt, which delays the
//! detected exit and biases exit times and positions by O(√dt).

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::{map_replicas, Purpose, RngFactory};
use crate::stats::Moments;

pub const DEFAULT_DT: f64 = 1e-4;
pub const DEFAULT_WOS_EPS: f64 = 1e-6;
/// Samples drawn from one RNG stream when a bank is built in parallel.
pub const CHUNK: u64 = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExitSampler {
    /// Fixed-step Euler path; yields exit time and position.
    Euler { dt: f64 },
    /// Walk on spheres stopped within `eps` of the boundary; position only.
    WalkOnSpheres { eps: f64 },
}

impl Default for ExitSampler {
    fn default() -> Self {
        ExitSampler::Euler { dt: DEFAULT_DT }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubeExit {
    /// Exit point on ∂[−1,1]^d.
    pub point: Vec<f64>,
    /// Exit time; `None` for samplers that do not track time.
    pub time: Option<f64>,
    /// Axis and sign of the face the path left through.
    pub axis: usize,
    pub positive: bool,
}

fn check_interior(x: &[f64]) -> Result<()> {
    if x.is_empty() {
        return Err(invalid("the cube needs dimension at least 1"));
    }
    if x.iter().any(|c| !(c.abs() < 1.0)) {
        return Err(invalid(format!("{x:?} is not strictly inside the cube")));
    }
    Ok(())
}

fn project_to_face(mut p: Vec<f64>) -> (Vec<f64>, usize, bool) {
    let (axis, _) = p
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .expect("nonempty point");
    let positive = p[axis] > 0.0;
    for c in p.iter_mut() {
        *c = c.clamp(-1.0, 1.0);
    }
    p[axis] = if positive { 1.0 } else { -1.0 };
    (p, axis, positive)
}

/// Euler–Maruyama path of standard Brownian motion from `x` until it leaves
/// the cube; the exit point is projected onto the face crossed.
pub fn harmonic_measure_sampler<R: Rng + ?Sized>(
    x: &[f64],
    dt: f64,
    rng: &mut R,
) -> Result<CubeExit> {
    check_interior(x)?;
    if !(dt > 0.0) {
        return Err(invalid(format!("time step must be positive, got {dt}")));
    }
    let s = dt.sqrt();
    let mut p = x.to_vec();
    let mut steps: u64 = 0;
    loop {
        steps += 1;
        let mut out = false;
        for c in p.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *c += s * z;
            out |= c.abs() >= 1.0;
        }
        if out {
            break;
        }
    }
    let (point, axis, positive) = project_to_face(p);
    Ok(CubeExit {
        point,
        time: Some(steps as f64 * dt),
        axis,
        positive,
    })
}

/// Walk on spheres: jump to a uniform point on the largest sphere inside
/// the cube until within `eps` of the boundary. The law of the returned
/// point converges to harmonic measure as eps → 0.
pub fn walk_on_spheres<R: Rng + ?Sized>(x: &[f64], eps: f64, rng: &mut R) -> Result<CubeExit> {
    check_interior(x)?;
    if !(eps > 0.0) {
        return Err(invalid(format!(
            "stopping distance must be positive, got {eps}"
        )));
    }
    let d = x.len();
    let mut p = x.to_vec();
    let mut dir = vec![0.0f64; d];
    loop {
        let r = 1.0 - p.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        if r < eps {
            break;
        }
        let mut norm: f64 = 0.0;
        for v in dir.iter_mut() {
            *v = rng.sample(StandardNormal);
            norm += *v * *v;
        }
        let scale = r / norm.sqrt();
        for (c, v) in p.iter_mut().zip(&dir) {
            *c += scale * v;
        }
    }
    let (point, axis, positive) = project_to_face(p);
    Ok(CubeExit {
        point,
        time: None,
        axis,
        positive,
    })
}

pub fn sample_exit<R: Rng + ?Sized>(
    sampler: ExitSampler,
    x: &[f64],
    rng: &mut R,
) -> Result<CubeExit> {
    match sampler {
        ExitSampler::Euler { dt } => harmonic_measure_sampler(x, dt, rng),
        ExitSampler::WalkOnSpheres { eps } => walk_on_spheres(x, eps, rng),
    }
}

/// Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub n: u64,
}

impl From<Moments> for Estimate {
    fn from(m: Moments) -> Self {
        Self {
            mean: m.mean(),
            se: m.se(),
            n: m.n,
        }
    }
}

/// |ỹ − z̃|^{2−d}
pub fn kernel(y: &[f64], z: &[f64]) -> f64 {
    let r2: f64 = y.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
    r2.powf(1.0 - y.len() as f64 / 2.0)
}

/// Exit samples of Brownian motion from a fixed source point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarmonicBank {
    pub source: Vec<f64>,
    pub sampler: ExitSampler,
    pub seed: u64,
    /// Flattened exit points, `dim` coordinates each.
    points: Vec<f64>,
    /// Exit times (empty when the sampler does not track time).
    times: Vec<f64>,
}

impl HarmonicBank {
    /// `n` exits from `source`. Sample i is drawn from stream
    /// (Brownian, i / CHUNK) of `factory`, so the bank does not depend on
    /// the thread count.
    pub fn build(
        source: &[f64],
        n: u64,
        sampler: ExitSampler,
        factory: &RngFactory,
    ) -> Result<Self> {
        check_interior(source)?;
        let chunks = n.div_ceil(CHUNK);
        let parts = map_replicas(chunks, |c| -> Result<Vec<CubeExit>> {
            let mut rng = factory.stream(Purpose::Brownian, c);
            let len = CHUNK.min(n - c * CHUNK);
            (0..len)
                .map(|_| sample_exit(sampler, source, &mut rng))
                .collect()
        });
        let mut points = Vec::with_capacity(n as usize * source.len());
        let mut times = Vec::new();
        for part in parts {
            for e in part? {
                points.extend_from_slice(&e.point);
                if let Some(t) = e.time {
                    times.push(t);
                }
            }
        }
        Ok(Self {
            source: source.to_vec(),
            sampler,
            seed: factory.master_seed(),
            points,
            times,
        })
    }

    pub fn dim(&self) -> usize {
        self.source.len()
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.points[i * d..(i + 1) * d]
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// q(source, y) averaged over the bank.
    pub fn q(&self, y: &[f64]) -> Result<Estimate> {
        check_interior(y)?;
        if y.len() != self.dim() {
            return Err(invalid("dimension mismatch between bank and target point"));
        }
        let mut m = Moments::new();
        for i in 0..self.len() {
            m.push(kernel(y, self.point(i)));
        }
        Ok(m.into())
    }

    /// CSV `x1..xd[,tau]`, one exit per line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let d = self.dim();
        let mut header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
        if !self.times.is_empty() {
            header.push("tau".into());
        }
        writeln!(out, "{}", header.join(","))?;
        for i in 0..self.len() {
            let mut row: Vec<String> = self.point(i).iter().map(|c| c.to_string()).collect();
            if let Some(t) = self.times.get(i) {
                row.push(t.to_string());
            }
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Monte Carlo estimate of q(x̃,ỹ) from `n` fresh harmonic-measure samples.
pub fn q_kernel(
    x: &[f64],
    y: &[f64],
    n: u64,
    sampler: ExitSampler,
    factory: &RngFactory,
) -> Result<Estimate> {
    if x.len() != y.len() {
        return Err(invalid("source and target dimensions differ"));
    }
    if x.len() < 3 {
        return Err(invalid("q is defined for d ≥ 3"));
    }
    HarmonicBank::build(x, n, sampler, factory)?.q(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_exit_time() {
        // E_x τ = 1 − x² for standard BM on [−1,1]
        let f = RngFactory::new(17);
        for &x0 in &[0.0, 0.5] {
            let bank =
                HarmonicBank::build(&[x0], 4000, ExitSampler::Euler { dt: 1e-4 }, &f).unwrap();
            let m = Moments::from_slice(bank.times());
            let want = 1.0 - x0 * x0;
            assert!(
                (m.mean() - want).abs() < 4.0 * m.se() + 0.01,
                "{} vs {want}",
                m.mean()
            );
        }
    }

    #[test]
    fn exit_points_lie_on_the_boundary() {
        let f = RngFactory::new(3);
        let bank = HarmonicBank::build(&[0.2, -0.3, 0.1], 200, ExitSampler::default(), &f).unwrap();
        for i in 0..bank.len() {
            let p = bank.point(i);
            let m = p.iter().fold(0.0f64, |m, c| m.max(c.abs()));
            assert_eq!(m, 1.0);
        }
        let wos = HarmonicBank::build(
            &[0.2, -0.3, 0.1],
            200,
            ExitSampler::WalkOnSpheres { eps: 1e-6 },
            &f,
        )
        .unwrap();
        assert!(wos.times().is_empty());
        assert_eq!(wos.len(), 200);
    }

    /// P_x(exit through {x₁ = 1}) by separation of variables: the harmonic
    /// function with boundary values 1 on that face and 0 elsewhere.
    fn face_probability_series(x: [f64; 3]) -> f64 {
        use std::f64::consts::PI;
        let mut s = 0.0;
        for m in (1..400).step_by(2) {
            for n in (1..400).step_by(2) {
                let k = PI / 2.0 * ((m * m + n * n) as f64).sqrt();
                let r = (k * (x[0] + 1.0) - 2.0 * k).exp()
                    * (1.0 - (-2.0 * k * (x[0] + 1.0)).exp())
                    / (1.0 - (-4.0 * k).exp());
                s += 16.0 / (PI * PI * (m * n) as f64)
                    * (m as f64 * PI * (x[1] + 1.0) / 2.0).sin()
                    * (n as f64 * PI * (x[2] + 1.0) / 2.0).sin()
                    * r;
            }
        }
        s
    }

    #[test]
    fn near_face_exit_probability() {
        let want = face_probability_series([0.9, 0.0, 0.0]);
        assert!((want - 0.8783).abs() < 1e-3);
        assert!((face_probability_series([0.0, 0.0, 0.0]) - 1.0 / 6.0).abs() < 1e-6);
        let f = RngFactory::new(5);
        let n = 20_000;
        let bank = HarmonicBank::build(
            &[0.9, 0.0, 0.0],
            n,
            ExitSampler::WalkOnSpheres { eps: 1e-6 },
            &f,
        )
        .unwrap();
        let through = (0..bank.len()).filter(|&i| bank.point(i)[0] == 1.0).count();
        let p = through as f64 / n as f64;
        let se = (want * (1.0 - want) / n as f64).sqrt();
        assert!((p - want).abs() < 3.0 * se, "{p} vs {want}");
    }

    #[test]
    fn q_is_positive_and_symmetric() {
        let f = RngFactory::new(8);
        let s = ExitSampler::WalkOnSpheres { eps: 1e-6 };
        let bank = HarmonicBank::build(&[0.0, 0.0, 0.0], 20_000, s, &f).unwrap();
        let a = bank.q(&[0.4, 0.0, 0.0]).unwrap();
        let b = bank.q(&[0.0, -0.4, 0.0]).unwrap();
        assert!(a.mean > 0.0 && b.mean > 0.0);
        assert!((a.mean - b.mean).abs() < 3.0 * (a.se * a.se + b.se * b.se).sqrt());
        assert!(q_kernel(&[0.0, 0.0], &[0.1, 0.0], 10, s, &f).is_err());
        assert!(bank.q(&[1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn bank_is_thread_independent_and_csv() {
        let f = RngFactory::new(1);
        let a =
            HarmonicBank::build(&[0.0, 0.0], 3000, ExitSampler::Euler { dt: 1e-3 }, &f).unwrap();
        let b =
            HarmonicBank::build(&[0.0, 0.0], 3000, ExitSampler::Euler { dt: 1e-3 }, &f).unwrap();
        assert_eq!(a, b);
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x1,x2,tau\n"));
        assert_eq!(text.lines().count(), 3001);
    }
}
