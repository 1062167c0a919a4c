use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::linalg::{cholesky, logdet, spd_inverse, symmetrize};
use super::IVector;
use crate::error::{Error, Result};
use crate::numerics::LN_2PI;

pub const PLDA_NOISE_FLOOR: f64 = 1e-6;

/// `w = mu + Phi y + Gamma z + eps`, `y, z ~ N(0, I)`, `eps ~ N(0, diag)`.
#[derive(Debug, Clone)]
pub struct PldaModel {
    mu: DVector<f64>,
    eigenvoice: DMatrix<f64>,
    eigenchannel: DMatrix<f64>,
    noise: DVector<f64>,
    scorer: Scorer,
}

impl PartialEq for PldaModel {
    fn eq(&self, other: &Self) -> bool {
        self.mu == other.mu
            && self.eigenvoice == other.eigenvoice
            && self.eigenchannel == other.eigenchannel
            && self.noise == other.noise
    }
}

/// Score `a'Qa/2 + b'Qb/2 + (a'Pb + b'Pa)/2 + k` for centred `a`, `b`.
#[derive(Debug, Clone)]
struct Scorer {
    q: DMatrix<f64>,
    p: DMatrix<f64>,
    k: f64,
}

impl Scorer {
    fn new(between: &DMatrix<f64>, within: &DMatrix<f64>) -> Result<Self> {
        let total = between + within;
        let (t_inv, ld_t) = spd_inverse(total.clone(), "PLDA total covariance")?;
        let s = symmetrize(&total - between * &t_inv * between);
        let (s_inv, ld_s) = spd_inverse(s, "PLDA conditional covariance")?;
        Ok(Self {
            q: &t_inv - &s_inv,
            p: symmetrize(&t_inv * between * &s_inv),
            k: 0.5 * (ld_t - ld_s),
        })
    }
}

impl PldaModel {
    pub fn new(mu: DVector<f64>, eigenvoice: DMatrix<f64>, eigenchannel: DMatrix<f64>, noise: DVector<f64>) -> Result<Self> {
        let r = mu.len();
        if eigenvoice.nrows() != r {
            return Err(Error::dims(r, eigenvoice.nrows()));
        }
        if eigenchannel.nrows() != r {
            return Err(Error::dims(r, eigenchannel.nrows()));
        }
        if noise.len() != r {
            return Err(Error::dims(r, noise.len()));
        }
        if noise.iter().any(|&v| !(v >= PLDA_NOISE_FLOOR && v.is_finite())) {
            return Err(Error::invalid("PLDA noise variances must be at least the floor"));
        }
        let scorer = Scorer::new(&(&eigenvoice * eigenvoice.transpose()), &within_cov(&eigenchannel, &noise))?;
        Ok(Self {
            mu,
            eigenvoice,
            eigenchannel,
            noise,
            scorer,
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn eigenvoice(&self) -> &DMatrix<f64> {
        &self.eigenvoice
    }

    pub fn eigenchannel(&self) -> &DMatrix<f64> {
        &self.eigenchannel
    }

    pub fn noise(&self) -> &DVector<f64> {
        &self.noise
    }

    /// `Phi Phi'`.
    pub fn between_covariance(&self) -> DMatrix<f64> {
        &self.eigenvoice * self.eigenvoice.transpose()
    }

    /// `Gamma Gamma' + diag(noise)`.
    pub fn within_covariance(&self) -> DMatrix<f64> {
        within_cov(&self.eigenchannel, &self.noise)
    }
}

fn within_cov(g: &DMatrix<f64>, noise: &DVector<f64>) -> DMatrix<f64> {
    g * g.transpose() + DMatrix::from_diagonal(noise)
}

/// Same-class versus different-class log-likelihood ratio, with the
/// different-class hypothesis `p(w1) p(w2)`.
pub fn plda_score(p: &PldaModel, w1: &IVector, w2: &IVector) -> Result<f64> {
    let r = p.dim();
    for w in [w1, w2] {
        if w.dim() != r {
            return Err(Error::dims(r, w.dim()));
        }
    }
    let a = &w1.values - &p.mu;
    let b = &w2.values - &p.mu;
    let s = &p.scorer;
    let qa = a.dot(&(&s.q * &a));
    let qb = b.dot(&(&s.q * &b));
    let cross = a.dot(&(&s.p * &b)) + b.dot(&(&s.p * &a));
    Ok(0.5 * (qa + qb) + 0.5 * cross + s.k)
}

/// Exact log-likelihood of grouped data. Each class splits into `n - 1`
/// orthogonal within-class contrasts with covariance `W` and a scaled mean
/// with covariance `W + n B`.
pub fn plda_log_likelihood(p: &PldaModel, classes: &[Vec<DVector<f64>>]) -> Result<f64> {
    let r = p.dim() as f64;
    let w = p.within_covariance();
    let b = p.between_covariance();
    let wc = cholesky(w.clone(), "PLDA within covariance")?;
    let ld_w = logdet(&wc);
    let mut by_size: BTreeMap<usize, (nalgebra::Cholesky<f64, nalgebra::Dyn>, f64)> = BTreeMap::new();
    let mut total = 0.0;
    for class in classes {
        let n = class.len();
        if n == 0 {
            continue;
        }
        let mean = class.iter().fold(DVector::zeros(p.dim()), |acc, x| acc + x) / n as f64;
        let mut within = 0.0;
        for x in class {
            let d = x - &mean;
            within += d.dot(&wc.solve(&d));
        }
        total -= 0.5 * ((n - 1) as f64 * (r * LN_2PI + ld_w) + within);
        if !by_size.contains_key(&n) {
            let c = cholesky(&w + &b * n as f64, "PLDA class-mean covariance")?;
            let ld = logdet(&c);
            by_size.insert(n, (c, ld));
        }
        let (c, ld) = &by_size[&n];
        let dm = (&mean - &p.mu) * (n as f64).sqrt();
        total -= 0.5 * (r * LN_2PI + ld + dm.dot(&c.solve(&dm)));
    }
    Ok(total)
}

fn check_classes(classes: &[Vec<IVector>]) -> Result<usize> {
    let nonempty: Vec<&Vec<IVector>> = classes.iter().filter(|c| !c.is_empty()).collect();
    if nonempty.len() < 2 {
        return Err(Error::InsufficientData("PLDA needs at least two classes".into()));
    }
    if nonempty.iter().all(|c| c.len() < 2) {
        return Err(Error::InsufficientData(
            "every PLDA class is a singleton; within-class variability is unidentifiable".into(),
        ));
    }
    let r = nonempty[0][0].dim();
    for v in nonempty.iter().flat_map(|c| c.iter()) {
        if v.dim() != r {
            return Err(Error::dims(r, v.dim()));
        }
    }
    Ok(r)
}

/// Seeded starting point: global mean, small random subspaces and the
/// per-dimension total variance as noise.
fn initial_model(data: &[Vec<DVector<f64>>], r: usize, speaker_rank: usize, channel_rank: usize, seed: u64) -> Result<PldaModel> {
    let count = data.iter().map(Vec::len).sum::<usize>() as f64;
    let mu = data.iter().flatten().fold(DVector::zeros(r), |acc, x| acc + x) / count;
    let mut var = DVector::<f64>::zeros(r);
    for x in data.iter().flatten() {
        var += (x - &mu).map(|v| v * v);
    }
    var /= count;
    let noise = var.map(|v| v.max(PLDA_NOISE_FLOOR));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |cols: usize| {
        DMatrix::from_fn(r, cols, |i, _| {
            let e: f64 = StandardNormal.sample(&mut rng);
            0.1 * e * noise[i].sqrt()
        })
    };
    let f = draw(speaker_rank);
    let g = draw(channel_rank);
    PldaModel::new(mu, f, g, noise)
}

struct Accumulators {
    svv: DMatrix<f64>,
    sdv: DMatrix<f64>,
    sdd: DVector<f64>,
    count: f64,
}

/// Exact posterior moments of `v = [y; z_j]` for every example and their
/// sufficient sums. `y | class` integrates out the channel factors; each
/// `z_j | y, x_j` is then Gaussian with mean `A (d_j - F y)`.
fn e_step(p: &PldaModel, data: &[Vec<DVector<f64>>]) -> Result<Accumulators> {
    let (f, g) = (&p.eigenvoice, &p.eigenchannel);
    let (ry, rz, r) = (f.ncols(), g.ncols(), p.dim());
    let (w_inv, _) = spd_inverse(p.within_covariance(), "PLDA within covariance")?;
    let ft_winv = f.transpose() * &w_inv;
    let ft_winv_f = symmetrize(&ft_winv * f);
    let gt_sinv = {
        let mut m = g.transpose();
        for (j, mut col) in m.column_iter_mut().enumerate() {
            col /= p.noise[j];
        }
        m
    };
    let (pz_inv, _) = spd_inverse(DMatrix::identity(rz, rz) + &gt_sinv * g, "PLDA channel precision")?;
    let a = &pz_inv * &gt_sinv;
    let af = &a * f;

    let mut syy = DMatrix::zeros(ry, ry);
    let mut szy = DMatrix::zeros(rz, ry);
    let mut szz = DMatrix::zeros(rz, rz);
    let mut sdy = DMatrix::zeros(r, ry);
    let mut sdz = DMatrix::zeros(r, rz);
    let mut sdd = DVector::zeros(r);
    let mut count = 0.0;
    let mut py_by_size: BTreeMap<usize, DMatrix<f64>> = BTreeMap::new();
    for class in data {
        let n = class.len();
        if n == 0 {
            continue;
        }
        let ds: Vec<DVector<f64>> = class.iter().map(|x| x - &p.mu).collect();
        let dsum = ds.iter().fold(DVector::zeros(r), |acc, d| acc + d);
        if !py_by_size.contains_key(&n) {
            let prec = DMatrix::identity(ry, ry) + &ft_winv_f * n as f64;
            py_by_size.insert(n, spd_inverse(prec, "PLDA speaker precision")?.0);
        }
        let py_inv = &py_by_size[&n];
        let m = py_inv * (&ft_winv * &dsum);
        let eyy = py_inv + &m * m.transpose();
        syy += &eyy * n as f64;
        let bpy = &af * py_inv;
        let mut esum = DVector::zeros(rz);
        for d in &ds {
            let e = &a * d - &af * &m;
            szz.ger(1.0, &e, &e, 1.0);
            sdz.ger(1.0, d, &e, 1.0);
            sdd += d.map(|v| v * v);
            esum += e;
        }
        szz += (&pz_inv + &bpy * af.transpose()) * n as f64;
        szy += &esum * m.transpose() - &bpy * n as f64;
        sdy += &dsum * m.transpose();
        count += n as f64;
    }
    let mut svv = DMatrix::zeros(ry + rz, ry + rz);
    svv.view_mut((0, 0), (ry, ry)).copy_from(&syy);
    svv.view_mut((ry, 0), (rz, ry)).copy_from(&szy);
    svv.view_mut((0, ry), (ry, rz)).copy_from(&szy.transpose());
    svv.view_mut((ry, ry), (rz, rz)).copy_from(&szz);
    let mut sdv = DMatrix::zeros(r, ry + rz);
    sdv.view_mut((0, 0), (r, ry)).copy_from(&sdy);
    sdv.view_mut((0, ry), (r, rz)).copy_from(&sdz);
    Ok(Accumulators {
        svv: symmetrize(svv),
        sdv,
        sdd,
        count,
    })
}

/// Joint update of `[Phi Gamma]` by regression on the latent moments, then
/// the diagonal noise from the residual.
fn m_step(p: &PldaModel, acc: &Accumulators) -> Result<PldaModel> {
    let ry = p.eigenvoice.ncols();
    let chol = cholesky(acc.svv.clone(), "PLDA latent second moments")?;
    let v = chol.solve(&acc.sdv.transpose()).transpose();
    let explained = (&v * acc.sdv.transpose()).diagonal();
    let noise = DVector::from_fn(p.dim(), |d, _| ((acc.sdd[d] - explained[d]) / acc.count).max(PLDA_NOISE_FLOOR));
    let f = v.columns(0, ry).into_owned();
    let g = v.columns(ry, v.ncols() - ry).into_owned();
    PldaModel::new(p.mu.clone(), f, g, noise)
}

fn values(classes: &[Vec<IVector>]) -> Vec<Vec<DVector<f64>>> {
    classes
        .iter()
        .filter(|c| !c.is_empty())
        .map(|c| c.iter().map(|v| v.values.clone()).collect())
        .collect()
}

/// EM training. Also returns the data log-likelihood before every
/// iteration and at the end.
pub fn train_plda_traced(
    classes: &[Vec<IVector>],
    speaker_rank: usize,
    channel_rank: usize,
    em_iterations: usize,
    seed: u64,
) -> Result<(PldaModel, Vec<f64>)> {
    let r = check_classes(classes)?;
    if speaker_rank == 0 || speaker_rank > r || channel_rank > r {
        return Err(Error::invalid(format!(
            "PLDA ranks ({speaker_rank}, {channel_rank}) must lie in 1..={r} and 0..={r}"
        )));
    }
    let data = values(classes);
    let mut model = initial_model(&data, r, speaker_rank, channel_rank, seed)?;
    let mut history = Vec::with_capacity(em_iterations + 1);
    for _ in 0..em_iterations {
        history.push(plda_log_likelihood(&model, &data)?);
        let acc = e_step(&model, &data)?;
        model = m_step(&model, &acc)?;
    }
    history.push(plda_log_likelihood(&model, &data)?);
    Ok((model, history))
}

pub fn train_plda(
    classes: &[Vec<IVector>],
    speaker_rank: usize,
    channel_rank: usize,
    em_iterations: usize,
    seed: u64,
) -> Result<PldaModel> {
    Ok(train_plda_traced(classes, speaker_rank, channel_rank, em_iterations, seed)?.0)
}
