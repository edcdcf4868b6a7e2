//! Evaluation on the learned manifold: geodesic K-NN classification, latent
//! traversals, and 2-D charts for visualisation exports.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2, Axis};

use crate::aae::CcmAae;
use crate::data::ImageDataset;
use crate::error::{Error, Result};
use crate::geometry::{
    self, distance_unchecked, exp_map_unchecked, log_map, AmbientPoint, Curvature,
};
use crate::priors::{sample_prior, PriorSpec};
use crate::rng::{self, GaussianStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KnnConfig {
    pub k: usize,
    pub labelled_per_class: usize,
    pub seed: u64,
}

impl Default for KnnConfig {
    fn default() -> Self {
        KnnConfig {
            k: 5,
            labelled_per_class: 100,
            seed: 0,
        }
    }
}

/// Places every row of `batch` on the manifold for distance computations.
///
/// Rows are projected with [`geometry::project_to_ccm`]. Hyperbolic rows
/// outside the light cone, which have no projection, are lifted onto the
/// hyperboloid with [`geometry::lift_to_hyperboloid`]. A zero row on the
/// sphere is an error.
pub fn place_on_manifold(batch: ArrayView2<'_, f64>, k: Curvature) -> Result<Array2<f64>> {
    let mut out = batch.to_owned();
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        let src = row.to_vec();
        let placed = match geometry::project_to_ccm(&src, k) {
            Ok(p) => p.into_inner(),
            Err(Error::Unprojectable(_)) if k == Curvature::Hyperbolic => {
                geometry::lift_to_hyperboloid(&src)
            }
            Err(e) => return Err(Error::Unprojectable(format!("row {i}: {e}"))),
        };
        row.iter_mut().zip(placed).for_each(|(o, v)| *o = v);
    }
    Ok(out)
}

/// Majority vote among the `cfg.k` geodesically nearest labelled points.
///
/// Neighbours at equal distance are ordered by index. Vote ties go to the
/// class with the smaller summed distance, then to the lower class index.
pub fn knn_geodesic(
    train_emb: ArrayView2<'_, f64>,
    train_labels: &[usize],
    query_emb: ArrayView2<'_, f64>,
    cfg: &KnnConfig,
    k: Curvature,
) -> Result<Vec<usize>> {
    if cfg.k == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    if train_emb.nrows() != train_labels.len() {
        return Err(Error::Dimension(format!(
            "{} labelled embeddings but {} labels",
            train_emb.nrows(),
            train_labels.len()
        )));
    }
    if train_labels.len() < cfg.k {
        return Err(Error::Config(format!(
            "K = {} exceeds the {} labelled points",
            cfg.k,
            train_labels.len()
        )));
    }
    if train_emb.ncols() != query_emb.ncols() {
        return Err(Error::Dimension("labelled and query widths differ".into()));
    }
    let labelled = place_on_manifold(train_emb, k)?;
    let queries = place_on_manifold(query_emb, k)?;
    let lab_rows: Vec<&[f64]> = labelled
        .rows()
        .into_iter()
        .map(|r| r.to_slice().expect("row-major"))
        .collect();
    let n_classes = train_labels.iter().max().map_or(0, |m| m + 1);

    let mut dists: Vec<(f64, usize)> = Vec::with_capacity(lab_rows.len());
    let mut votes = vec![0usize; n_classes];
    let mut sums = vec![0.0f64; n_classes];
    let mut out = Vec::with_capacity(queries.nrows());
    for q in queries.rows() {
        let q = q.to_slice().expect("row-major");
        dists.clear();
        dists.extend(
            lab_rows
                .iter()
                .enumerate()
                .map(|(i, r)| (distance_unchecked(q, r, k), i)),
        );
        let by_distance =
            |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if cfg.k < dists.len() {
            dists.select_nth_unstable_by(cfg.k - 1, by_distance);
        }
        votes.iter_mut().for_each(|v| *v = 0);
        sums.iter_mut().for_each(|s| *s = 0.0);
        for &(d, i) in &dists[..cfg.k] {
            votes[train_labels[i]] += 1;
            sums[train_labels[i]] += d;
        }
        let best = (0..n_classes)
            .filter(|&c| votes[c] > 0)
            .min_by(|&a, &b| {
                votes[b]
                    .cmp(&votes[a])
                    .then(sums[a].total_cmp(&sums[b]))
                    .then(a.cmp(&b))
            })
            .expect("K >= 1 neighbours cast votes");
        out.push(best);
    }
    Ok(out)
}

/// Draws `cfg.labelled_per_class` training indices per class, class by
/// class, each class shuffled with its own stream of `cfg.seed`.
pub fn select_labelled(labels: &[usize], cfg: &KnnConfig) -> Result<Vec<usize>> {
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut chosen = Vec::with_capacity(n_classes * cfg.labelled_per_class);
    for c in 0..n_classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if idx.len() < cfg.labelled_per_class {
            return Err(Error::Config(format!(
                "class {c} has {} training points, fewer than l = {}",
                idx.len(),
                cfg.labelled_per_class
            )));
        }
        rng::shuffle(&mut rng::seeded(cfg.seed, c as u64), &mut idx);
        chosen.extend_from_slice(&idx[..cfg.labelled_per_class]);
    }
    Ok(chosen)
}

/// Fraction of test points whose geodesic K-NN label, using `l` labelled
/// training points per class, matches the true label.
pub fn semi_supervised_accuracy(
    model: &CcmAae,
    train: &ImageDataset,
    test: &ImageDataset,
    cfg: &KnnConfig,
) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Config("test set is empty".into()));
    }
    let chosen = select_labelled(&train.labels, cfg)?;
    let labelled = train.select(&chosen);
    let lab_emb = model.encode(labelled.pixels.view())?;
    let test_emb = model.encode(test.pixels.view())?;
    let pred = knn_geodesic(
        lab_emb.view(),
        &labelled.labels,
        test_emb.view(),
        cfg,
        model.curvature,
    )?;
    let correct = pred
        .iter()
        .zip(&test.labels)
        .filter(|(p, t)| p == t)
        .count();
    Ok(correct as f64 / test.len() as f64)
}

/// Latent path and its decoded samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Traversal {
    pub latent: Array2<f64>,
    pub decoded: Array2<f64>,
}

impl Traversal {
    /// Export with header `step,pixel_0,...`.
    pub fn to_csv(&self) -> String {
        pixels_csv("step", self.decoded.view())
    }
}

/// Rows of `pixels` under the header `<index>,pixel_0,...,pixel_{D-1}`.
pub fn pixels_csv(index: &str, pixels: ArrayView2<'_, f64>) -> String {
    let mut out = String::from(index);
    for j in 0..pixels.ncols() {
        out.push_str(&format!(",pixel_{j}"));
    }
    out.push('\n');
    for (i, row) in pixels.rows().into_iter().enumerate() {
        out.push_str(&i.to_string());
        for v in row {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

/// `n` prior draws projected onto the manifold and decoded, whatever the
/// model's decode policy.
pub fn prior_samples(model: &CcmAae, n: usize, seed: u64) -> Result<Traversal> {
    let width = model.latent_dim() + 1;
    if n == 0 {
        let decoded = Array2::zeros((0, model.decoder.output_dim()));
        return Ok(Traversal {
            latent: Array2::zeros((0, width)),
            decoded,
        });
    }
    let spec = PriorSpec::new(model.curvature, model.latent_dim(), seed)?;
    let drawn = sample_prior(spec, n)?;
    let mut latent = drawn.clone();
    for (mut out, row) in latent.rows_mut().into_iter().zip(drawn.rows()) {
        let p = geometry::project_to_ccm(&row.to_vec(), model.curvature)?;
        out.iter_mut().zip(p.iter()).for_each(|(o, v)| *o = *v);
    }
    decode_on_manifold(model, latent)
}

fn decode_on_manifold(model: &CcmAae, latent: Array2<f64>) -> Result<Traversal> {
    // Points are on the manifold already, so projection is the identity.
    let decoded = model.decoder.predict(latent.view())?;
    Ok(Traversal { latent, decoded })
}

/// Two orthonormal directions spanning the traversal circle: the first two
/// coordinate axes for `d = 2`, a seeded random plane otherwise.
fn equator_basis(dim: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let width = dim + 1;
    let mut a = vec![0.0; width];
    let mut b = vec![0.0; width];
    if dim == 2 {
        a[0] = 1.0;
        b[1] = 1.0;
        return (a, b);
    }
    let mut g = GaussianStream::new(rng::seeded(seed, 0));
    let normalise = |v: &mut Vec<f64>| {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= n);
    };
    g.fill(&mut a);
    normalise(&mut a);
    loop {
        g.fill(&mut b);
        let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        b.iter_mut().zip(&a).for_each(|(y, x)| *y -= dot * x);
        if b.iter().map(|x| x * x).sum::<f64>() > 1e-12 {
            break;
        }
    }
    normalise(&mut b);
    (a, b)
}

/// `n_steps` points evenly spaced around a great circle of the latent
/// sphere, starting at angle 0, decoded to data space.
pub fn equator_traversal(model: &CcmAae, n_steps: usize, seed: u64) -> Result<Traversal> {
    if model.curvature != Curvature::Spherical {
        return Err(Error::Unsupported(
            "equator traversal needs a spherical latent space; use a geodesic traversal".into(),
        ));
    }
    let (a, b) = equator_basis(model.latent_dim(), seed);
    let mut latent = Array2::zeros((n_steps, a.len()));
    for (i, mut row) in latent.rows_mut().into_iter().enumerate() {
        let theta = 2.0 * PI * i as f64 / n_steps as f64;
        let (s, c) = theta.sin_cos();
        row.iter_mut()
            .zip(a.iter().zip(&b))
            .for_each(|(o, (x, y))| *o = c * x + s * y);
    }
    decode_on_manifold(model, latent)
}

/// Decodes `exp_start(t · log_start(end))` for `n_steps` values of `t`
/// evenly spaced in `[0, 1]`.
pub fn geodesic_traversal(
    model: &CcmAae,
    start: &AmbientPoint,
    end: &AmbientPoint,
    n_steps: usize,
) -> Result<Traversal> {
    let k = model.curvature;
    if start.len() != model.latent_dim() + 1 {
        return Err(Error::Dimension(format!(
            "endpoints have {} coordinates, model latent width is {}",
            start.len(),
            model.latent_dim() + 1
        )));
    }
    let v = log_map(start, end, k)?;
    let mut latent = Array2::zeros((n_steps, start.len()));
    for (i, mut row) in latent.rows_mut().into_iter().enumerate() {
        let t = if n_steps > 1 {
            i as f64 / (n_steps - 1) as f64
        } else {
            0.0
        };
        let step: Vec<f64> = v.direction().iter().map(|x| t * x).collect();
        let p = if i + 1 == n_steps && n_steps > 1 {
            end.to_vec()
        } else {
            exp_map_unchecked(start, &step, k)
        };
        row.iter_mut().zip(p).for_each(|(o, x)| *o = x);
    }
    decode_on_manifold(model, latent)
}

/// Sum of consecutive geodesic distances along the rows of `path`.
pub fn path_length(path: ArrayView2<'_, f64>, k: Curvature) -> Result<f64> {
    let rows: Vec<Vec<f64>> = path.axis_iter(Axis(0)).map(|r| r.to_vec()).collect();
    rows.windows(2)
        .map(|w| geometry::geodesic_distance(&w[0], &w[1], k))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartPoint {
    pub u: f64,
    pub v: f64,
}

fn check_chart_input(z: &[f64], k: Curvature) -> Result<()> {
    if z.len() != 3 {
        return Err(Error::Dimension(format!(
            "2-D charts need 3 ambient coordinates, got {}",
            z.len()
        )));
    }
    geometry::check_on_manifold(z, k)
}

/// Poincaré disk coordinates `(z₁, z₂) / (1 + z₃)` of a hyperboloid point.
pub fn poincare_chart(z: &[f64]) -> Result<ChartPoint> {
    check_chart_input(z, Curvature::Hyperbolic)?;
    let den = 1.0 + z[2];
    Ok(ChartPoint {
        u: z[0] / den,
        v: z[1] / den,
    })
}

/// Aitoff projection of a point of `S²`.
///
/// Axis convention: coordinate 3 is the polar axis, longitude is
/// `atan2(z₂, z₁)` and latitude `asin(z₃)`, so `(1, 0, 0)` maps to the centre.
pub fn aitoff_chart(z: &[f64]) -> Result<ChartPoint> {
    check_chart_input(z, Curvature::Spherical)?;
    let lon = z[1].atan2(z[0]);
    let lat = z[2].clamp(-1.0, 1.0).asin();
    let alpha = (lat.cos() * (lon / 2.0).cos()).clamp(-1.0, 1.0).acos();
    let sinc = if alpha.abs() < 1e-12 {
        1.0
    } else {
        alpha.sin() / alpha
    };
    Ok(ChartPoint {
        u: 2.0 * lat.cos() * (lon / 2.0).sin() / sinc,
        v: lat.sin() / sinc,
    })
}

/// Export with header `u,v,label`.
pub fn chart_csv(points: &[ChartPoint], labels: &[usize]) -> String {
    let mut out = String::from("u,v,label\n");
    for (p, l) in points.iter().zip(labels) {
        out.push_str(&format!("{},{},{}\n", p.u, p.v, l));
    }
    out
}
