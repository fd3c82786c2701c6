//! WebAssembly bindings for the browser demo in `www/`.

use thicket::gff::Gff;
use thicket::green::lattice_green_constant;
use thicket::lattice::{build_box, BoxLattice, RateModel, StepDistribution};
use thicket::limits::{critical_count_pmf, gumbel_cdf, sample_tau_bank, TimeConvention};
use thicket::rng::{Purpose, RngFactory};
use thicket::thick::thick_set_2d;
use thicket::walker::Walker;
use wasm_bindgen::prelude::*;

fn js(e: thicket::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Row-major side × side grid over the box, row 0 at the top (y = N).
fn grid(b: &BoxLattice, values: impl Iterator<Item = (u32, f64)>) -> Vec<f64> {
    let side = b.side();
    let r = b.radius() as i64;
    let mut out = vec![0.0; side * side];
    for (v, x) in values {
        let s = b.site(v);
        out[(r - s[1]) as usize * side + (s[0] + r) as usize] = x;
    }
    out
}

#[wasm_bindgen]
pub struct Heatmap {
    side: usize,
    values: Vec<f64>,
    thick: Vec<u8>,
    threshold: f64,
    tau: f64,
}

#[wasm_bindgen]
impl Heatmap {
    #[wasm_bindgen(getter)]
    pub fn side(&self) -> usize {
        self.side
    }

    /// Local times, row-major.
    #[wasm_bindgen(getter)]
    pub fn values(&self) -> Vec<f64> {
        self.values.clone()
    }

    /// 1 where the site is a-thick.
    #[wasm_bindgen(getter)]
    pub fn thick(&self) -> Vec<u8> {
        self.thick.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    #[wasm_bindgen(getter)]
    pub fn tau(&self) -> f64 {
        self.tau
    }
}

/// One unit-rate walk from the origin of the planar box of radius `n`,
/// with its a-thick points.
#[wasm_bindgen]
pub fn walk_heatmap(n: usize, a: f64, seed: u64) -> Result<Heatmap, JsError> {
    let b = build_box(2, n, RateModel::UnitRate).map_err(js)?;
    let mut rng = RngFactory::new(seed).stream(Purpose::Walk, 0);
    let f = Walker::for_box(&b)
        .run_until_exit(b.origin(), &mut rng, 0)
        .map_err(js)?;
    let slope = StepDistribution::nearest_neighbor().potential_slope();
    let set = thick_set_2d(&f, a, slope, n).map_err(js)?;
    let thick = grid(&b, set.vertices.iter().map(|&v| (v, 1.0)));
    Ok(Heatmap {
        side: b.side(),
        values: grid(&b, f.local_times.iter().copied()),
        thick: thick.into_iter().map(|x| x as u8).collect(),
        threshold: set.threshold,
        tau: f.tau,
    })
}

/// One Dirichlet free field sample on the planar box of radius `n`, row-major.
#[wasm_bindgen]
pub fn gff_sample(n: usize, seed: u64) -> Result<Vec<f64>, JsError> {
    let b = build_box(2, n, RateModel::UnitRate).map_err(js)?;
    let field = Gff::from_domain(&b.graph, &b.domain).map_err(js)?;
    let mut rng = RngFactory::new(seed).stream(Purpose::Field, 0);
    let sample = field.sample(&mut rng);
    Ok(grid(&b, field.sites().iter().copied().zip(sample)))
}

#[wasm_bindgen]
pub struct LimitCurves {
    t: Vec<f64>,
    cdf: Vec<f64>,
    pmf: Vec<f64>,
    g: f64,
    mean_tau: f64,
}

#[wasm_bindgen]
impl LimitCurves {
    #[wasm_bindgen(getter)]
    pub fn t(&self) -> Vec<f64> {
        self.t.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn cdf(&self) -> Vec<f64> {
        self.cdf.clone()
    }

    /// P(count = k) for k = 0..=kmax.
    #[wasm_bindgen(getter)]
    pub fn pmf(&self) -> Vec<f64> {
        self.pmf.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn g(&self) -> f64 {
        self.g
    }

    #[wasm_bindgen(getter)]
    pub fn mean_tau(&self) -> f64 {
        self.mean_tau
    }
}

/// Gumbel-mixture CDF on `points` values of t in [t_min, t_max] and the
/// critical-count pmf, both from a bank of `bank` Brownian exit times of
/// the cube [−1, 1]^dim.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn limit_curves(
    dim: usize,
    bank: u64,
    dt: f64,
    seed: u64,
    t_min: f64,
    t_max: f64,
    points: usize,
    kmax: u32,
) -> Result<LimitCurves, JsError> {
    let g = lattice_green_constant(dim).map_err(js)?.value;
    let taus = sample_tau_bank(dim, bank, dt, &RngFactory::new(seed))
        .map_err(js)?
        .to_convention(TimeConvention::WalkScaled);
    let points = points.max(2);
    let t: Vec<f64> = (0..points)
        .map(|i| t_min + (t_max - t_min) * i as f64 / (points - 1) as f64)
        .collect();
    let cdf = t
        .iter()
        .map(|&x| gumbel_cdf(x, &taus, g))
        .collect::<Result<_, _>>()
        .map_err(js)?;
    let pmf = (0..=kmax)
        .map(|k| critical_count_pmf(k, &taus, g))
        .collect::<Result<_, _>>()
        .map_err(js)?;
    Ok(LimitCurves {
        t,
        cdf,
        pmf,
        g,
        mean_tau: taus.moments().mean(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heatmap_layout() {
        let h = walk_heatmap(4, 0.1, 3).unwrap();
        assert_eq!(h.values.len(), 81);
        // the walk starts at the center and spends positive time there
        assert!(h.values[40] > 0.0);
        assert!(h
            .thick
            .iter()
            .zip(&h.values)
            .all(|(&t, &v)| t == 0 || v >= h.threshold));
    }

    #[test]
    fn curves_are_distributions() {
        let c = limit_curves(3, 500, 1e-3, 1, -4.0, 20.0, 30, 20).unwrap();
        assert!(c.cdf.windows(2).all(|w| w[0] <= w[1]));
        assert!(c.cdf[29] > 0.99);
        let mass: f64 = c.pmf.iter().sum();
        assert!((mass - 1.0).abs() < 1e-3);
    }
}
