//! Stable-equilibrium-point clustering: every point descends `f` to a local
//! minimum, coincident minima are merged, and only the minima are labeled.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{sq_dist, DataSet};
use crate::error::{Error, Result};
use crate::labeling::{label_complete_graph, AdjacencyParams, OutlierPolicy, OUTLIER};
use crate::svdd::SvddModel;
use crate::union_find::UnionFind;

const MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescentOptions {
    pub step0: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub shrink: f64,
}

impl DescentOptions {
    /// Initial step `1/(4q)`, halving backtracking, `‖∇f‖ <= 1e-6`, 500
    /// iterations.
    pub fn for_q(q: f64) -> Self {
        Self {
            step0: 1.0 / (4.0 * q),
            max_iters: 500,
            grad_tol: 1e-6,
            shrink: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step0 > 0.0) || !self.step0.is_finite() {
            return Err(Error::invalid(format!("step0 must be positive, got {}", self.step0)));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::invalid(format!("shrink must lie in (0, 1), got {}", self.shrink)));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::invalid(format!("grad_tol must be positive, got {}", self.grad_tol)));
        }
        Ok(())
    }
}

/// Default SEP merge radius, a hundredth of the kernel length scale.
pub fn default_merge_eps(q: f64) -> f64 {
    1e-2 / q.sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Descent {
    pub point: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Gradient descent on `f` with backtracking: each iteration starts from
/// `step0` and shrinks the step while `f` would increase.
pub fn descend(model: &SvddModel, x0: &[f64], opts: &DescentOptions) -> Result<Descent> {
    opts.validate()?;
    if x0.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: x0.len(),
        });
    }
    Ok(descend_unchecked(model, x0, opts))
}

fn descend_unchecked(model: &SvddModel, x0: &[f64], opts: &DescentOptions) -> Descent {
    let mut x = x0.to_vec();
    let (mut f, mut g) = model.radius2_and_gradient(&x);
    let mut trial = vec![0.0; x.len()];
    for it in 0..opts.max_iters {
        if norm(&g) <= opts.grad_tol {
            return Descent {
                point: x,
                converged: true,
                iterations: it,
            };
        }
        let mut eta = opts.step0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            for ((t, xi), gi) in trial.iter_mut().zip(&x).zip(&g) {
                *t = xi - eta * gi;
            }
            if model.radius2_unchecked(&trial) <= f {
                accepted = true;
                break;
            }
            eta *= opts.shrink;
        }
        if !accepted {
            // No decrease along the gradient at machine precision.
            return Descent {
                converged: norm(&g) <= opts.grad_tol,
                point: x,
                iterations: it,
            };
        }
        std::mem::swap(&mut x, &mut trial);
        (f, g) = model.radius2_and_gradient(&x);
    }
    Descent {
        converged: norm(&g) <= opts.grad_tol,
        point: x,
        iterations: opts.max_iters,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SepSet {
    pub sep_points: Vec<Vec<f64>>,
    /// SEP index of every input point.
    pub assignment: Vec<usize>,
    pub merge_eps: f64,
    /// Descents that stopped before reaching the gradient tolerance.
    pub non_converged: usize,
}

impl SepSet {
    pub fn len(&self) -> usize {
        self.sep_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sep_points.is_empty()
    }

    pub fn as_dataset(&self) -> Result<DataSet> {
        DataSet::from_rows(&self.sep_points)
    }

    /// SEP coordinates as CSV, plus one SEP index per input line.
    pub fn write(&self, seps_path: &Path, assignment_path: &Path) -> Result<()> {
        self.as_dataset()?.write_csv(seps_path, false)?;
        let file = File::create(assignment_path).map_err(|e| Error::io(assignment_path, e))?;
        let mut w = BufWriter::new(file);
        for a in &self.assignment {
            writeln!(w, "{a}").map_err(|e| Error::io(assignment_path, e))?;
        }
        w.flush().map_err(|e| Error::io(assignment_path, e))
    }
}

/// Descends from every point and merges landing points by single linkage at
/// radius `merge_eps`; each SEP is the mean of its landings.
pub fn find_seps(model: &SvddModel, points: &DataSet, opts: &DescentOptions, merge_eps: f64) -> Result<SepSet> {
    opts.validate()?;
    if points.d() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: points.d(),
        });
    }
    if !(merge_eps > 0.0) {
        return Err(Error::invalid(format!("merge_eps must be positive, got {merge_eps}")));
    }
    let descents: Vec<Descent> = (0..points.n())
        .into_par_iter()
        .map(|i| descend_unchecked(model, points.row(i), opts))
        .collect();
    let non_converged = descents.iter().filter(|d| !d.converged).count();
    if non_converged > 0 {
        log::debug!("{non_converged} of {} descents did not converge", descents.len());
    }
    let landings: Vec<&[f64]> = descents.iter().map(|d| d.point.as_slice()).collect();
    let (sep_points, assignment) = merge_landings(&landings, merge_eps);
    Ok(SepSet {
        sep_points,
        assignment,
        merge_eps,
        non_converged,
    })
}

/// Single-linkage grouping of `landings`, then repeated merging of group
/// means that are still closer than `eps`.
fn merge_landings(landings: &[&[f64]], eps: f64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let n = landings.len();
    let eps2 = eps * eps;
    let mut uf = UnionFind::new(n);

    // Sweep along the first coordinate; only pairs within eps there can link.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| landings[a][0].total_cmp(&landings[b][0]).then(a.cmp(&b)));
    for (pos, &i) in order.iter().enumerate() {
        for &j in &order[pos + 1..] {
            if landings[j][0] - landings[i][0] >= eps {
                break;
            }
            if sq_dist(landings[i], landings[j]) < eps2 {
                uf.union(i, j);
            }
        }
    }

    loop {
        let groups = uf.labels();
        let means = group_means(landings, &groups);
        let mut merged = false;
        for a in 0..means.len() {
            for b in a + 1..means.len() {
                if sq_dist(&means[a], &means[b]) < eps2 {
                    let ia = groups.iter().position(|&g| g == a).expect("group a non-empty");
                    let ib = groups.iter().position(|&g| g == b).expect("group b non-empty");
                    merged |= uf.union(ia, ib);
                }
            }
        }
        if !merged {
            return (means, groups);
        }
    }
}

fn group_means(points: &[&[f64]], groups: &[usize]) -> Vec<Vec<f64>> {
    let count = groups.iter().max().map_or(0, |&g| g + 1);
    let d = points.first().map_or(0, |p| p.len());
    let mut sums = vec![vec![0.0; d]; count];
    let mut sizes = vec![0usize; count];
    for (p, &g) in points.iter().zip(groups) {
        sums[g].iter_mut().zip(p.iter()).for_each(|(s, v)| *s += v);
        sizes[g] += 1;
    }
    for (s, &k) in sums.iter_mut().zip(&sizes) {
        s.iter_mut().for_each(|v| *v /= k as f64);
    }
    sums
}

#[derive(Debug, Clone)]
pub struct SepClustering {
    pub labels: Vec<i64>,
    pub seps: SepSet,
    /// Label of each SEP.
    pub sep_labels: Vec<i64>,
}

/// Labels SEPs by complete-graph connectivity and hands every point its
/// SEP's label.
///
/// SEPs testing outside the sphere borrow the label of the nearest interior
/// SEP; if no SEP is interior each forms its own cluster. No point is ever
/// labeled as an outlier.
pub fn label_seps(model: &SvddModel, seps: SepSet, adj: &AdjacencyParams) -> Result<SepClustering> {
    let sep_data = seps.as_dataset()?;
    let mut sep_labels = label_complete_graph(model, &sep_data, adj, OutlierPolicy::AssignNearest)?;
    if sep_labels.iter().any(|&l| l == OUTLIER) {
        sep_labels = (0..seps.len() as i64).collect();
    }
    let labels = seps.assignment.iter().map(|&s| sep_labels[s]).collect();
    Ok(SepClustering { labels, seps, sep_labels })
}

/// SEP-based SVC: [`find_seps`] followed by [`label_seps`].
pub fn sep_svc(
    model: &SvddModel,
    points: &DataSet,
    opts: &DescentOptions,
    merge_eps: f64,
    adj: &AdjacencyParams,
) -> Result<SepClustering> {
    let seps = find_seps(model, points, opts, merge_eps)?;
    label_seps(model, seps, adj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_blobs;
    use crate::svdd::{train, KernelParams, TrainOptions};

    fn model_on(data: &DataSet, q: f64) -> SvddModel {
        train(data, KernelParams::new(q, 1.0).unwrap(), &TrainOptions::default()).unwrap()
    }

    #[test]
    fn equilibrium_start_returns_immediately() {
        let data = DataSet::new(2, 1, vec![-1.0, 1.0]).unwrap();
        let model = model_on(&data, 0.3);
        let d = descend(&model, &[0.0], &DescentOptions::for_q(0.3)).unwrap();
        assert!(d.converged);
        assert_eq!(d.iterations, 0);
        assert_eq!(d.point, vec![0.0]);
    }

    #[test]
    fn single_point_model_descends_to_it() {
        let data = DataSet::new(1, 2, vec![1.0, 2.0]).unwrap();
        let q = 0.5;
        let model = model_on(&data, q);
        for x0 in [[0.0, 0.0], [2.5, 1.0], [1.3, 2.2]] {
            let d = descend(&model, &x0, &DescentOptions::for_q(q)).unwrap();
            assert!(sq_dist(&d.point, &[1.0, 2.0]).sqrt() < 1e-3, "{:?}", d.point);
            assert!(d.converged);
        }
    }

    #[test]
    fn rejects_bad_options() {
        let data = DataSet::new(1, 1, vec![0.0]).unwrap();
        let model = model_on(&data, 1.0);
        let mut o = DescentOptions::for_q(1.0);
        o.shrink = 1.0;
        assert!(descend(&model, &[0.0], &o).is_err());
        assert!(descend(&model, &[0.0, 1.0], &DescentOptions::for_q(1.0)).is_err());
    }

    #[test]
    fn two_blobs_give_two_seps() {
        let data = generate_blobs(30, &[vec![0.0, 0.0], vec![8.0, 0.0]], 0.7, 4).unwrap();
        let q = 0.3;
        let model = model_on(&data, q);
        let seps = find_seps(&model, &data, &DescentOptions::for_q(q), default_merge_eps(q)).unwrap();
        assert_eq!(seps.len(), 2, "{:?}", seps.sep_points);
        let truth = data.truth_labels().unwrap();
        for i in 0..data.n() {
            assert_eq!(seps.assignment[i] as i64, truth[i]);
        }
    }

    #[test]
    fn identical_inputs_share_one_sep() {
        let data = DataSet::new(5, 2, [0.3, 0.1].repeat(5)).unwrap();
        let other = generate_blobs(10, &[vec![0.0, 0.0]], 1.0, 1).unwrap();
        let model = model_on(&other, 0.5);
        let seps = find_seps(&model, &data, &DescentOptions::for_q(0.5), 1e-3).unwrap();
        assert_eq!(seps.len(), 1);
    }

    #[test]
    fn huge_merge_radius_gives_one_sep() {
        let data = generate_blobs(20, &[vec![0.0, 0.0], vec![8.0, 0.0]], 0.7, 4).unwrap();
        let model = model_on(&data, 0.3);
        let seps = find_seps(&model, &data, &DescentOptions::for_q(0.3), f64::INFINITY).unwrap();
        assert_eq!(seps.len(), 1);
        let out = sep_svc(&model, &data, &DescentOptions::for_q(0.3), f64::INFINITY, &AdjacencyParams::for_model(&model, 15).unwrap()).unwrap();
        assert!(out.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn sep_svc_recovers_blobs() {
        let data = generate_blobs(40, &[vec![0.0, 0.0], vec![8.0, 0.0], vec![0.0, 8.0]], 0.7, 9).unwrap();
        let q = 0.3;
        let model = model_on(&data, q);
        let adj = AdjacencyParams::for_model(&model, 15).unwrap();
        let out = sep_svc(&model, &data, &DescentOptions::for_q(q), default_merge_eps(q), &adj).unwrap();
        assert!(out.labels.iter().all(|&l| l != OUTLIER));
        assert_eq!(crate::metrics::nmi(&out.labels, data.truth_labels().unwrap()).unwrap(), 1.0);
    }

    #[test]
    fn merged_means_respect_radius() {
        let a = [0.0, 0.0];
        let b = [0.6, 0.0];
        let c = [1.2, 0.0];
        // a-b and b-c link; the chain's mean then sits alone
        let (means, groups) = merge_landings(&[&a, &b, &c], 0.7);
        assert_eq!(means.len(), 1);
        assert_eq!(groups, vec![0, 0, 0]);
        let (means, _) = merge_landings(&[&a, &c], 0.7);
        assert_eq!(means.len(), 2);
    }
}
