//! Erdős–Rényi DAG sampling, linear and Gaussian-process SEM simulation, and
//! the exact covariance oracle for linear-Gaussian models.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Exp, Gumbel, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::graph::Dag;
use crate::linalg::cholesky_in_place;
use crate::rng::{streams, substream};

/// Noise family for one SEM variable. Scale parameters must be positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum NoiseSpec {
    Gaussian { mean: f64, std: f64 },
    Uniform { low: f64, high: f64 },
    Laplace { loc: f64, scale: f64 },
    Gumbel { loc: f64, scale: f64 },
    Exponential { rate: f64 },
}

impl NoiseSpec {
    pub fn standard_gaussian() -> Self {
        NoiseSpec::Gaussian { mean: 0.0, std: 1.0 }
    }

    /// The five unit-scale families used by the mixed-noise setting.
    pub fn unit_families() -> [NoiseSpec; 5] {
        [
            NoiseSpec::Gaussian { mean: 0.0, std: 1.0 },
            NoiseSpec::Uniform { low: -1.0, high: 1.0 },
            NoiseSpec::Laplace { loc: 0.0, scale: 1.0 },
            NoiseSpec::Gumbel { loc: 0.0, scale: 1.0 },
            NoiseSpec::Exponential { rate: 1.0 },
        ]
    }

    /// Per-node specs for the mixed-noise setting: each node's family drawn
    /// uniformly from the five unit-scale families.
    pub fn mixed_for(d: usize, seed: u64) -> Vec<NoiseSpec> {
        let mut rng = substream(seed, "noisemix");
        let families = NoiseSpec::unit_families();
        (0..d).map(|_| families[rng.gen_range(0..families.len())]).collect()
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            NoiseSpec::Gaussian { .. } => "gaussian",
            NoiseSpec::Uniform { .. } => "uniform",
            NoiseSpec::Laplace { .. } => "laplace",
            NoiseSpec::Gumbel { .. } => "gumbel",
            NoiseSpec::Exponential { .. } => "exponential",
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            NoiseSpec::Gaussian { std, .. } => std > 0.0,
            NoiseSpec::Uniform { low, high } => high > low,
            NoiseSpec::Laplace { scale, .. } => scale > 0.0,
            NoiseSpec::Gumbel { scale, .. } => scale > 0.0,
            NoiseSpec::Exponential { rate } => rate > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(CoreError::InvalidParameter {
                name: "noise",
                reason: format!("non-positive scale in {self:?}"),
            })
        }
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            NoiseSpec::Gaussian { mean, std } => {
                Normal::new(mean, std).expect("validated").sample(rng)
            }
            NoiseSpec::Uniform { low, high } => rng.gen_range(low..high),
            NoiseSpec::Laplace { loc, scale } => {
                // Inverse CDF; rand_distr has no Laplace distribution.
                let u: f64 = rng.gen_range(-0.5..0.5);
                loc - scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
            NoiseSpec::Gumbel { loc, scale } => {
                Gumbel::new(loc, scale).expect("validated").sample(rng)
            }
            NoiseSpec::Exponential { rate } => Exp::new(rate).expect("validated").sample(rng),
        }
    }
}

/// An N×d sample matrix with variable names and standardization metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub names: Vec<String>,
    pub data: Array2<f64>,
    pub standardized: bool,
    /// Per-column means recorded by [`Dataset::standardize`].
    pub means: Option<Vec<f64>>,
    /// Per-column standard deviations recorded by [`Dataset::standardize`].
    pub stds: Option<Vec<f64>>,
}

impl Dataset {
    pub fn new(names: Vec<String>, data: Array2<f64>) -> Result<Self> {
        if data.nrows() < 1 {
            return Err(CoreError::InvalidDataset("need at least one sample".into()));
        }
        if names.len() != data.ncols() {
            return Err(CoreError::InvalidDataset(format!(
                "{} names for {} columns",
                names.len(),
                data.ncols()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::InvalidDataset("non-finite entry".into()));
        }
        Ok(Dataset {
            names,
            data,
            standardized: false,
            means: None,
            stds: None,
        })
    }

    /// Default names `x0..x{d-1}`.
    pub fn with_default_names(data: Array2<f64>) -> Result<Self> {
        let names = (0..data.ncols()).map(|i| format!("x{i}")).collect();
        Dataset::new(names, data)
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn d(&self) -> usize {
        self.data.ncols()
    }

    /// Explicitly standardizes every column to mean 0, std 1 (unbiased
    /// 1/(N-1) convention, matching [`crate::gauss::sample_covariance`]),
    /// recording the original means and stds. Constant columns are left
    /// centered with the std recorded as 1 to avoid division by zero.
    pub fn standardize(&self) -> Dataset {
        let n = self.n() as f64;
        let mut data = self.data.clone();
        let mut means = Vec::with_capacity(self.d());
        let mut stds = Vec::with_capacity(self.d());
        for j in 0..self.d() {
            let mut col = data.column_mut(j);
            let mean = col.sum() / n;
            let var = if self.n() > 1 {
                col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            let std = if var > 0.0 { var.sqrt() } else { 1.0 };
            col.mapv_inplace(|v| (v - mean) / std);
            means.push(mean);
            stds.push(std);
        }
        Dataset {
            names: self.names.clone(),
            data,
            standardized: true,
            means: Some(means),
            stds: Some(stds),
        }
    }

    /// Writes the dataset as CSV: a name header then one row per sample,
    /// floats in shortest round-trip decimal form.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::with_capacity(self.n() * self.d() * 8);
        out.push_str(&self.names.join(","));
        out.push('\n');
        for row in self.data.rows() {
            let mut first = true;
            for v in row.iter() {
                if !first {
                    out.push(',');
                }
                out.push_str(&format!("{v}"));
                first = false;
            }
            out.push('\n');
        }
        let mut f = std::fs::File::create(path)
            .map_err(|e| CoreError::io(path.display().to_string(), e))?;
        f.write_all(out.as_bytes())
            .map_err(|e| CoreError::io(path.display().to_string(), e))
    }

    /// Reads a dataset CSV written by [`Dataset::write_csv`] (or any CSV with
    /// a header row of names and numeric body).
    pub fn read_csv(path: &Path) -> Result<Dataset> {
        let p = path.display().to_string();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| CoreError::malformed(&p, e.to_string()))?;
        let names: Vec<String> = reader
            .headers()
            .map_err(|e| CoreError::malformed(&p, e.to_string()))?
            .iter()
            .map(|s| s.to_string())
            .collect();
        let d = names.len();
        let mut values = Vec::new();
        let mut n = 0usize;
        for (ln, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| CoreError::malformed(&p, e.to_string()))?;
            if rec.len() != d {
                return Err(CoreError::malformed(
                    &p,
                    format!("row {} has {} cells, expected {d}", ln + 2, rec.len()),
                ));
            }
            for cell in rec.iter() {
                let v: f64 = cell.parse().map_err(|_| {
                    CoreError::malformed(&p, format!("bad number {cell:?} on row {}", ln + 2))
                })?;
                values.push(v);
            }
            n += 1;
        }
        let data = Array2::from_shape_vec((n, d), values)
            .map_err(|e| CoreError::malformed(&p, e.to_string()))?;
        Dataset::new(names, data)
    }
}

/// Samples an Erdős–Rényi DAG: a random permutation fixes the causal order,
/// then each forward pair becomes an edge with probability
/// `avg_degree / (d-1)`, giving `d*avg_degree/2` edges in expectation.
pub fn sample_er_dag(d: usize, avg_degree: f64, seed: u64) -> Result<Dag> {
    if d < 2 {
        return Err(CoreError::InvalidParameter {
            name: "d",
            reason: "need d >= 2".into(),
        });
    }
    if !(avg_degree > 0.0) || avg_degree > (d - 1) as f64 {
        return Err(CoreError::InvalidParameter {
            name: "avg_degree",
            reason: format!("must be in (0, {}]", d - 1),
        });
    }
    let mut rng = substream(seed, streams::ER_DAG);
    let mut order: Vec<usize> = (0..d).collect();
    order.shuffle(&mut rng);
    let p = avg_degree / (d - 1) as f64;
    let mut edges = Vec::new();
    for a in 0..d {
        for b in (a + 1)..d {
            if rng.gen_bool(p) {
                edges.push((order[a], order[b]));
            }
        }
    }
    Dag::new(d, edges)
}

/// Edge weights with magnitude uniform in `[0.5, 2]` and uniform sign.
pub fn sample_sem_weights(dag: &Dag, seed: u64) -> BTreeMap<(usize, usize), f64> {
    let mut rng = substream(seed, streams::SEM_WEIGHTS);
    let mut weights = BTreeMap::new();
    for (p, c) in dag.edges() {
        let mag: f64 = rng.gen_range(0.5..=2.0);
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        weights.insert((p, c), sign * mag);
    }
    weights
}

/// Simulates a linear SEM `x_i = Σ_p w_{p→i} x_p + ε_i` in topological order.
pub fn simulate_linear_sem(
    dag: &Dag,
    weights: &BTreeMap<(usize, usize), f64>,
    n: usize,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<Dataset> {
    noise.validate()?;
    if n < 1 {
        return Err(CoreError::InvalidParameter {
            name: "n",
            reason: "need n >= 1".into(),
        });
    }
    for (p, c) in dag.edges() {
        if !weights.contains_key(&(p, c)) {
            return Err(CoreError::MissingWeight { parent: p, child: c });
        }
    }
    let d = dag.d();
    let mut rng = substream(seed, streams::SEM_NOISE);
    let mut data = Array2::<f64>::zeros((n, d));
    for &v in dag.topological_order() {
        for k in 0..n {
            let mut x = noise.sample(&mut rng);
            for &p in dag.parents(v) {
                x += weights[&(p, v)] * data[(k, p)];
            }
            data[(k, v)] = x;
        }
    }
    Dataset::with_default_names(data)
}

const GP_JITTER_START: f64 = 1e-8;
const GP_JITTER_MAX: f64 = 1e-4;

/// Draws one zero-mean GP realization with RBF kernel
/// `k(a,b) = exp(-‖a-b‖²/2)` at the given input points, via Cholesky of the
/// Gram matrix with escalating diagonal jitter. Bitwise-identical input
/// points are tied to the same function value.
pub(crate) fn gp_draw(points: &Array2<f64>, rng: &mut impl Rng) -> Result<Array1<f64>> {
    let n = points.nrows();
    // Deduplicate exact-duplicate rows: a function must map equal inputs to
    // equal outputs, and duplicates make the Gram matrix singular.
    let mut unique_rows: Vec<usize> = Vec::new();
    let mut assign = vec![0usize; n];
    let mut seen: std::collections::HashMap<Vec<u64>, usize> = std::collections::HashMap::new();
    for i in 0..n {
        let key: Vec<u64> = points.row(i).iter().map(|v| v.to_bits()).collect();
        match seen.get(&key) {
            Some(&u) => assign[i] = u,
            None => {
                let u = unique_rows.len();
                seen.insert(key, u);
                unique_rows.push(i);
                assign[i] = u;
            }
        }
    }
    let m = unique_rows.len();
    let mut gram = Array2::<f64>::zeros((m, m));
    for a in 0..m {
        gram[(a, a)] = 1.0;
        for b in (a + 1)..m {
            let ra = points.row(unique_rows[a]);
            let rb = points.row(unique_rows[b]);
            let sq: f64 = ra
                .iter()
                .zip(rb.iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            let k = (-sq / 2.0).exp();
            gram[(a, b)] = k;
            gram[(b, a)] = k;
        }
    }
    let z: Vec<f64> = (0..m)
        .map(|_| Normal::new(0.0, 1.0).unwrap().sample(rng))
        .collect();
    let mut jitter = GP_JITTER_START;
    loop {
        let mut chol = gram.clone();
        for a in 0..m {
            chol[(a, a)] += jitter;
        }
        if cholesky_in_place(&mut chol).is_ok() {
            let mut f_unique = vec![0.0; m];
            for i in 0..m {
                let mut acc = 0.0;
                for k in 0..=i {
                    acc += chol[(i, k)] * z[k];
                }
                f_unique[i] = acc;
            }
            return Ok(Array1::from_iter((0..n).map(|i| f_unique[assign[i]])));
        }
        jitter *= 10.0;
        if jitter > GP_JITTER_MAX {
            return Err(CoreError::GramNotPd {
                max_jitter: GP_JITTER_MAX,
            });
        }
    }
}

/// Simulates a nonlinear SEM: each non-root variable is a fresh GP draw over
/// its parents' sample values plus noise; roots are pure noise.
pub fn simulate_gp_sem(
    dag: &Dag,
    n: usize,
    noise_specs: &[NoiseSpec],
    seed: u64,
) -> Result<Dataset> {
    if n < 2 {
        return Err(CoreError::InvalidParameter {
            name: "n",
            reason: "need n >= 2".into(),
        });
    }
    let d = dag.d();
    if noise_specs.len() != d {
        return Err(CoreError::InvalidParameter {
            name: "noise_specs",
            reason: format!("{} specs for d={d}", noise_specs.len()),
        });
    }
    for s in noise_specs {
        s.validate()?;
    }
    let mut noise_rng = substream(seed, streams::SEM_NOISE);
    let mut gp_rng = substream(seed, streams::GP_DRAW);
    let mut data = Array2::<f64>::zeros((n, d));
    for &v in dag.topological_order() {
        let parents = dag.parents(v);
        if parents.is_empty() {
            for k in 0..n {
                data[(k, v)] = noise_specs[v].sample(&mut noise_rng);
            }
        } else {
            let inputs = Array2::from_shape_fn((n, parents.len()), |(k, j)| data[(k, parents[j])]);
            let f = gp_draw(&inputs, &mut gp_rng)?;
            for k in 0..n {
                data[(k, v)] = f[k] + noise_specs[v].sample(&mut noise_rng);
            }
        }
    }
    Dataset::with_default_names(data)
}

/// Exact covariance of a linear-Gaussian SEM:
/// `Σ = (I-W)^{-T} diag(noise_vars) (I-W)^{-1}` with `W[p][c] = w_{p→c}`.
///
/// `(I-W)` is inverted exactly by back-substitution in topological order,
/// where it is unit upper triangular.
pub fn analytic_covariance(
    dag: &Dag,
    weights: &BTreeMap<(usize, usize), f64>,
    noise_vars: &[f64],
) -> Result<Array2<f64>> {
    let d = dag.d();
    if noise_vars.len() != d {
        return Err(CoreError::InvalidParameter {
            name: "noise_vars",
            reason: format!("{} entries for d={d}", noise_vars.len()),
        });
    }
    if noise_vars.iter().any(|&v| v <= 0.0) {
        return Err(CoreError::InvalidParameter {
            name: "noise_vars",
            reason: "noise variances must be positive".into(),
        });
    }
    for (p, c) in dag.edges() {
        if !weights.contains_key(&(p, c)) {
            return Err(CoreError::MissingWeight { parent: p, child: c });
        }
    }
    let topo = dag.topological_order();
    let mut pos = vec![0usize; d];
    for (i, &v) in topo.iter().enumerate() {
        pos[v] = i;
    }
    // B = I - W in topological coordinates: unit upper triangular.
    let mut b = Array2::<f64>::eye(d);
    for ((p, c), &w) in weights {
        b[(pos[*p], pos[*c])] = -w;
    }
    // Invert by back-substitution, column by column.
    let mut binv = Array2::<f64>::zeros((d, d));
    for col in 0..d {
        for row in (0..=col).rev() {
            let mut v = if row == col { 1.0 } else { 0.0 };
            for k in (row + 1)..=col {
                v -= b[(row, k)] * binv[(k, col)];
            }
            binv[(row, col)] = v;
        }
    }
    // Σ_topo = Binv^T D Binv.
    let mut sigma_topo = Array2::<f64>::zeros((d, d));
    for i in 0..d {
        for j in i..d {
            let mut acc = 0.0;
            for k in 0..d {
                acc += binv[(k, i)] * noise_vars[topo[k]] * binv[(k, j)];
            }
            sigma_topo[(i, j)] = acc;
            sigma_topo[(j, i)] = acc;
        }
    }
    // Back to original variable order.
    Ok(Array2::from_shape_fn((d, d), |(i, j)| {
        sigma_topo[(pos[i], pos[j])]
    }))
}
