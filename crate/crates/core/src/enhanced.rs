//! Enhanced data: the D^s functional built from Hölder norms of the linear waves
//! and of their high×high→low products, plus the scaling diagnostics of those
//! products.

use crate::error::{Error, Result};
use crate::grid::{dyadic_range, Field1D, Grid1D};
use crate::randomdata::LinearWaves;
use crate::spectral::{
    alias_guard, derivative, holder_norm, lp_project, rewindow, scaling_slope, shift, Axis, SlopeFit, Spectral,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Sign {
    pub const BOTH: [Sign; 2] = [Sign::Plus, Sign::Minus];

    pub fn symbol(self) -> char {
        match self {
            Sign::Plus => '+',
            Sign::Minus => '-',
        }
    }

    fn index(self) -> usize {
        match self {
            Sign::Plus => 0,
            Sign::Minus => 1,
        }
    }
}

/// Windowed wave profiles φ^± on a periodic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveProfiles {
    pub grid: Grid1D,
    pub plus: Vec<Field1D>,
    pub minus: Vec<Field1D>,
}

impl WaveProfiles {
    pub fn new(plus: Vec<Field1D>, minus: Vec<Field1D>) -> Result<Self> {
        let grid = plus
            .first()
            .ok_or_else(|| Error::Invalid("wave profiles need at least one component".into()))?
            .grid;
        if plus.len() != minus.len() || plus.iter().chain(&minus).any(|f| !f.grid.same_as(&grid)) {
            return Err(Error::GridMismatch("wave components disagree in count or grid".into()));
        }
        Ok(Self { grid, plus, minus })
    }

    /// θφ^± of linear waves, multiplied by the re-windowing profile.
    pub fn from_linear(waves: &LinearWaves) -> Result<Self> {
        let d = waves.dim();
        let th = waves.theta;
        let plus = (0..d).map(|k| rewindow(&waves.plus(k).scale(th))).collect();
        let minus = (0..d).map(|k| rewindow(&waves.minus(k).scale(th))).collect();
        Self::new(plus, minus)
    }

    pub fn dim(&self) -> usize {
        self.plus.len()
    }

    pub fn get(&self, sign: Sign, k: usize) -> &Field1D {
        match sign {
            Sign::Plus => &self.plus[k],
            Sign::Minus => &self.minus[k],
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            grid: self.grid,
            plus: self.plus.iter().map(|f| f.scale(c)).collect(),
            minus: self.minus.iter().map(|f| f.scale(c)).collect(),
        }
    }
}

/// Dyadic scales M for which every product P_M f · ∂P_N g with M, N in the set
/// passes the aliasing guard: (9/8)(M + N) ≤ Nyquist/2.
pub fn default_scales(grid: Grid1D) -> Vec<u64> {
    let limit = grid.nyquist() / 2.0;
    dyadic_range(grid.norm_cap())
        .into_iter()
        .filter(|&m| 2.0 * 1.125 * m as f64 <= limit)
        .collect()
}

/// `count` equispaced shifts on [−T, T].
pub fn default_shifts(half_width: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![0.0];
    }
    (0..count)
        .map(|j| -half_width + 2.0 * half_width * j as f64 / (count - 1) as f64)
        .collect()
}

/// M^s P_M φ^{±₁,m}(x − t) · ∂_x P_N φ^{±₂,n}(x + t).
#[allow(clippy::too_many_arguments)]
pub fn hhl_product(
    waves: &WaveProfiles,
    sign1: Sign,
    sign2: Sign,
    m: usize,
    n: usize,
    big_m: u64,
    big_n: u64,
    s: f64,
    t: f64,
) -> Result<Field1D> {
    if m >= waves.dim() || n >= waves.dim() {
        return Err(Error::Invalid(format!("component index out of range for D = {}", waves.dim())));
    }
    let lo = lp_project(waves.get(sign1, m), Axis::X, big_m, false)?;
    let hi = derivative(&lp_project(waves.get(sign2, n), Axis::X, big_n, false)?, Axis::X)?;
    let (lo, hi) = if t == 0.0 {
        (lo, hi)
    } else {
        (shift(&lo, Axis::X, t)?, shift(&hi, Axis::X, -t)?)
    };
    alias_guard(lo.active_band(Axis::X)?, hi.active_band(Axis::X)?, &waves.grid)?;
    let c = (big_m as f64).powf(s);
    lo.zip(&hi, |a, b| c * a * b)
}

/// One entry of the Φ-table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub sign1: Sign,
    pub sign2: Sign,
    pub m: usize,
    pub n: usize,
    #[serde(rename = "M")]
    pub big_m: u64,
    #[serde(rename = "N")]
    pub big_n: u64,
    pub t: f64,
    /// false for the unshifted products, true for the shifted mixed products
    pub shifted: bool,
    pub norm: f64,
}

/// Result of evaluating D^s (or the D^s distance).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnhancedData {
    pub s: f64,
    pub scales: Vec<u64>,
    pub t_samples: Vec<f64>,
    pub ds_value: f64,
    /// ‖φ^+‖_{C^s} + ‖φ^-‖_{C^s}
    pub linear_branch: f64,
    /// sup of sqrt‖Φ‖_{C^{s−1}} over unshifted products
    pub product_branch: f64,
    /// sup of sqrt‖Φ^{(s)}‖_{C^{s−1}} over shifted mixed products
    pub shifted_branch: f64,
    pub table: Vec<TableEntry>,
}

/// LP pieces M^s P_M φ^{±,k} and ∂_x P_N φ^{±,k}, indexed [sign][k][scale].
struct Pieces {
    lo: Vec<Vec<Vec<Field1D>>>,
    hi: Vec<Vec<Vec<Field1D>>>,
    lo_band: Vec<Vec<Vec<f64>>>,
    hi_band: Vec<Vec<Vec<f64>>>,
}

impl Pieces {
    fn build(waves: &WaveProfiles, scales: &[u64], s: f64) -> Result<Self> {
        let d = waves.dim();
        let mut lo = vec![vec![Vec::new(); d]; 2];
        let mut hi = vec![vec![Vec::new(); d]; 2];
        for sign in Sign::BOTH {
            for k in 0..d {
                for &sc in scales {
                    let p = lp_project(waves.get(sign, k), Axis::X, sc, false)?;
                    hi[sign.index()][k].push(derivative(&p, Axis::X)?);
                    lo[sign.index()][k].push(p.scale((sc as f64).powf(s)));
                }
            }
        }
        let band = |v: &Vec<Vec<Vec<Field1D>>>| -> Result<Vec<Vec<Vec<f64>>>> {
            v.iter()
                .map(|a| {
                    a.iter()
                        .map(|b| b.iter().map(|f| f.active_band(Axis::X)).collect())
                        .collect()
                })
                .collect()
        };
        Ok(Self {
            lo_band: band(&lo)?,
            hi_band: band(&hi)?,
            lo,
            hi,
        })
    }

    fn shifted(&self, t: f64) -> Result<Self> {
        let sh = |v: &Vec<Vec<Vec<Field1D>>>, t: f64| -> Result<Vec<Vec<Vec<Field1D>>>> {
            v.iter()
                .map(|a| {
                    a.iter()
                        .map(|b| b.iter().map(|f| shift(f, Axis::X, t)).collect())
                        .collect()
                })
                .collect()
        };
        Ok(Self {
            lo: sh(&self.lo, t)?,
            hi: sh(&self.hi, -t)?,
            lo_band: self.lo_band.clone(),
            hi_band: self.hi_band.clone(),
        })
    }

    fn product(&self, s1: Sign, s2: Sign, m: usize, n: usize, i: usize, j: usize, grid: &Grid1D) -> Result<Field1D> {
        alias_guard(
            self.lo_band[s1.index()][m][i],
            self.hi_band[s2.index()][n][j],
            grid,
        )?;
        self.lo[s1.index()][m][i].zip(&self.hi[s2.index()][n][j], |a, b| a * b)
    }
}

/// Scan every Φ entry; with `other` present the table holds norms of Φ₁ − Φ₂.
fn scan(
    a: &WaveProfiles,
    b: Option<&WaveProfiles>,
    s: f64,
    scales: &[u64],
    t_samples: &[f64],
) -> Result<Vec<TableEntry>> {
    let d = a.dim();
    let grid = a.grid;
    let pa = Pieces::build(a, scales, s)?;
    let pb = b.map(|w| Pieces::build(w, scales, s)).transpose()?;
    let mut table = Vec::new();
    let mut emit = |pa: &Pieces, pb: Option<&Pieces>, pairs: &[(Sign, Sign)], t: f64, shifted: bool| -> Result<()> {
        for &(s1, s2) in pairs {
            for m in 0..d {
                for n in 0..d {
                    for (i, &big_m) in scales.iter().enumerate() {
                        for (j, &big_n) in scales.iter().enumerate() {
                            let mut f = pa.product(s1, s2, m, n, i, j, &grid)?;
                            if let Some(pb) = pb {
                                f = f.sub(&pb.product(s1, s2, m, n, i, j, &grid)?)?;
                            }
                            table.push(TableEntry {
                                sign1: s1,
                                sign2: s2,
                                m,
                                n,
                                big_m,
                                big_n,
                                t,
                                shifted,
                                norm: holder_norm(&f, s - 1.0),
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    };
    let all = [
        (Sign::Plus, Sign::Plus),
        (Sign::Plus, Sign::Minus),
        (Sign::Minus, Sign::Plus),
        (Sign::Minus, Sign::Minus),
    ];
    let mixed = [(Sign::Plus, Sign::Minus), (Sign::Minus, Sign::Plus)];
    emit(&pa, pb.as_ref(), &all, 0.0, false)?;
    for &t in t_samples {
        // the t = 0 shifted products coincide with the unshifted mixed entries
        if t == 0.0 {
            continue;
        }
        let sa = pa.shifted(t)?;
        let sb = pb.as_ref().map(|p| p.shifted(t)).transpose()?;
        emit(&sa, sb.as_ref(), &mixed, t, true)?;
    }
    Ok(table)
}

fn assemble(linear: f64, s: f64, scales: &[u64], t_samples: &[f64], table: Vec<TableEntry>) -> EnhancedData {
    let product_branch = table
        .iter()
        .filter(|e| !e.shifted)
        .fold(0.0f64, |a, e| a.max(e.norm.sqrt()));
    let has_zero = t_samples.contains(&0.0);
    let shifted_branch = table
        .iter()
        .filter(|e| e.shifted || (has_zero && e.sign1 != e.sign2))
        .fold(0.0f64, |a, e| a.max(e.norm.sqrt()));
    EnhancedData {
        s,
        scales: scales.to_vec(),
        t_samples: t_samples.to_vec(),
        ds_value: linear.max(product_branch).max(shifted_branch),
        linear_branch: linear,
        product_branch,
        shifted_branch,
        table,
    }
}

/// ‖(φ^+, φ^-)‖_{D^s} with the sup over t replaced by `t_samples`.
pub fn ds_norm(waves: &WaveProfiles, s: f64, scales: &[u64], t_samples: &[f64]) -> Result<EnhancedData> {
    let linear: f64 = waves.plus.iter().map(|f| holder_norm(f, s)).fold(0.0, f64::max)
        + waves.minus.iter().map(|f| holder_norm(f, s)).fold(0.0, f64::max);
    let table = scan(waves, None, s, scales, t_samples)?;
    Ok(assemble(linear, s, scales, t_samples, table))
}

/// D^s distance between two wave pairs on the same grid.
pub fn ds_distance(
    a: &WaveProfiles,
    b: &WaveProfiles,
    s: f64,
    scales: &[u64],
    t_samples: &[f64],
) -> Result<EnhancedData> {
    if !a.grid.same_as(&b.grid) || a.dim() != b.dim() {
        return Err(Error::GridMismatch("ds_distance needs waves on the same grid and dimension".into()));
    }
    let diff = |x: &[Field1D], y: &[Field1D]| -> Result<f64> {
        let mut m = 0.0f64;
        for (p, q) in x.iter().zip(y) {
            m = m.max(holder_norm(&p.sub(q)?, s));
        }
        Ok(m)
    };
    let linear = diff(&a.plus, &b.plus)? + diff(&a.minus, &b.minus)?;
    let table = scan(a, Some(b), s, scales, t_samples)?;
    Ok(assemble(linear, s, scales, t_samples, table))
}

/// One (M, N) entry of the product-estimate sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaEntry {
    #[serde(rename = "M")]
    pub big_m: u64,
    #[serde(rename = "N")]
    pub big_n: u64,
    /// max over signs and components of ‖P_Mφ ∂_xP_Nφ‖_{C^{r−1}}
    pub lhs: f64,
    /// M^{−s} N^{r−s}
    pub weight: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HhlReport {
    pub s: f64,
    pub r: f64,
    /// (M, max over N, signs and components of ‖Φ_{M,N}‖_{C^{s−1}})
    pub column: Vec<(u64, f64)>,
    pub fit: SlopeFit,
    pub lemma: Vec<LemmaEntry>,
    pub lemma_max_ratio: f64,
    pub lemma_constant: f64,
    /// max ratio ≤ C·ds², when a D^s value was supplied
    pub lemma_holds: Option<bool>,
}

/// Default constant of the product-estimate check.
pub const LEMMA_CONSTANT: f64 = 50.0;

/// Column M ↦ sup_N ‖Φ_{M,N}‖_{C^{s−1}} over `column_scales` (N ranges over
/// `scales`), its log-log slope, and the sweep of
/// ‖P_Mφ ∂_xP_Nφ‖_{C^{r−1}} / (M^{−s}N^{r−s}) over M ≤ N.
pub fn hhl_scaling_report(
    waves: &WaveProfiles,
    s: f64,
    r: f64,
    scales: &[u64],
    column_scales: &[u64],
    ds_value: Option<f64>,
    with_lemma: bool,
) -> Result<HhlReport> {
    let d = waves.dim();
    let grid = waves.grid;
    let pieces = Pieces::build(waves, scales, s)?;
    let idx = |sc: u64| {
        scales
            .iter()
            .position(|&x| x == sc)
            .ok_or_else(|| Error::Invalid(format!("column scale {sc} is not in the scale range")))
    };
    let mut column = Vec::with_capacity(column_scales.len());
    for &big_m in column_scales {
        let i = idx(big_m)?;
        let mut best = 0.0f64;
        for s1 in Sign::BOTH {
            for s2 in Sign::BOTH {
                for m in 0..d {
                    for n in 0..d {
                        for j in 0..scales.len() {
                            let f = pieces.product(s1, s2, m, n, i, j, &grid)?;
                            best = best.max(holder_norm(&f, s - 1.0));
                        }
                    }
                }
            }
        }
        column.push((big_m, best));
    }
    let pairs: Vec<(f64, f64)> = column.iter().map(|&(m, v)| (m as f64, v)).collect();
    let fit = scaling_slope(&pairs)?;
    let mut lemma = Vec::new();
    if with_lemma {
        for (i, &big_m) in scales.iter().enumerate() {
            for (j, &big_n) in scales.iter().enumerate().skip(i) {
                let mut lhs = 0.0f64;
                // undo the M^s weight carried by the cached low piece
                let unweight = (big_m as f64).powf(-s);
                for s1 in Sign::BOTH {
                    for s2 in Sign::BOTH {
                        for m in 0..d {
                            for n in 0..d {
                                let f = pieces.product(s1, s2, m, n, i, j, &grid)?;
                                lhs = lhs.max(unweight * holder_norm(&f, r - 1.0));
                            }
                        }
                    }
                }
                let weight = (big_m as f64).powf(-s) * (big_n as f64).powf(r - s);
                lemma.push(LemmaEntry {
                    big_m,
                    big_n,
                    lhs,
                    weight,
                    ratio: lhs / weight,
                });
            }
        }
    }
    let lemma_max_ratio = lemma.iter().fold(0.0f64, |a, e| a.max(e.ratio));
    let lemma_holds = match (with_lemma, ds_value) {
        (true, Some(ds)) => Some(lemma_max_ratio <= LEMMA_CONSTANT * ds * ds),
        _ => None,
    };
    Ok(HhlReport {
        s,
        r,
        column,
        fit,
        lemma,
        lemma_max_ratio,
        lemma_constant: LEMMA_CONSTANT,
        lemma_holds,
    })
}

/// Adversarial lacunary profile with one O(1) high×high→low interaction per scale:
/// φ^{+,0} = a Σ_k n_k^{−1/2} sin(n_k x), φ^{+,1} = a Σ_k n_k^{−1/2} sin((n_k − 1)x),
/// n_k = 3·2^{k−2} for each M = 2^k in `scales` (k ≥ 2); all other components vanish.
pub fn lacunary_adversary(grid: Grid1D, dim: usize, scales: &[u64], amplitude: f64) -> Result<WaveProfiles> {
    if dim < 2 {
        return Err(Error::Invalid("the lacunary adversary needs D >= 2".into()));
    }
    if (grid.half_length - std::f64::consts::PI).abs() > 1e-12 {
        return Err(Error::GridMismatch("the lacunary adversary lives on the 2π-periodic grid".into()));
    }
    let freqs: Vec<f64> = scales.iter().filter(|&&m| m >= 4).map(|&m| 0.75 * m as f64).collect();
    if let Some(&top) = freqs.last() {
        if top > grid.nyquist() / 8.0 {
            return Err(Error::Unresolved {
                n: top,
                max: grid.nyquist() / 8.0,
            });
        }
    }
    let a = Field1D::from_fn(grid, |x| amplitude * freqs.iter().map(|&n| n.powf(-0.5) * (n * x).sin()).sum::<f64>());
    let b = Field1D::from_fn(grid, |x| {
        amplitude * freqs.iter().map(|&n| n.powf(-0.5) * ((n - 1.0) * x).sin()).sum::<f64>()
    });
    let mut plus = vec![Field1D::zeros(grid); dim];
    plus[0] = a;
    plus[1] = b;
    WaveProfiles::new(plus, vec![Field1D::zeros(grid); dim])
}

/// Scale the adversary so its linear branch matches `target`.
pub fn matched_adversary(grid: Grid1D, dim: usize, scales: &[u64], s: f64, target: f64) -> Result<WaveProfiles> {
    let unit = lacunary_adversary(grid, dim, scales, 1.0)?;
    let lin = unit.plus.iter().map(|f| holder_norm(f, s)).fold(0.0, f64::max);
    if !(lin > 0.0) {
        return Err(Error::Invalid("adversary has no resolved scales".into()));
    }
    Ok(unit.scale(target / lin))
}
