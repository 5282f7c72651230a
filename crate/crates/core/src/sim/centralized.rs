//! Full-state information filter that sees every robot's data. Written against
//! raw matrices so it shares no inference code with the factor graphs it is
//! compared to.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::filter::LinearDynamics;
use crate::gaussian::Subject;

#[derive(Debug, Clone)]
pub struct CentralizedFilter {
    blocks: Vec<(Subject, usize, usize)>,
    info_matrix: DMatrix<f64>,
    info_vector: DVector<f64>,
}

impl CentralizedFilter {
    /// Independent Gaussian priors, one per subject, stacked in the given order.
    pub fn new(priors: Vec<(Subject, DVector<f64>, DMatrix<f64>)>) -> Result<Self> {
        let n: usize = priors.iter().map(|(_, m, _)| m.len()).sum();
        let mut info_matrix = DMatrix::zeros(n, n);
        let mut info_vector = DVector::zeros(n);
        let mut blocks = Vec::new();
        let mut offset = 0;
        for (subject, mean, cov) in priors {
            let d = mean.len();
            let info = cov
                .cholesky()
                .ok_or_else(|| Error::numerical(format!("prior of {subject} not PD"), f64::INFINITY))?
                .inverse();
            info_vector.rows_mut(offset, d).copy_from(&(&info * mean));
            info_matrix.view_mut((offset, offset), (d, d)).copy_from(&info);
            blocks.push((subject, offset, d));
            offset += d;
        }
        Ok(CentralizedFilter {
            blocks,
            info_matrix,
            info_vector,
        })
    }

    pub fn dim(&self) -> usize {
        self.info_vector.len()
    }

    fn block(&self, subject: Subject) -> Result<(usize, usize)> {
        self.blocks
            .iter()
            .find(|(s, _, _)| *s == subject)
            .map(|&(_, o, d)| (o, d))
            .ok_or_else(|| Error::structural(format!("{subject} not in centralized state")))
    }

    fn moments(&self) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let chol = self.info_matrix.clone().cholesky().ok_or_else(|| {
            Error::numerical("centralized information not PD", f64::INFINITY)
        })?;
        Ok((chol.solve(&self.info_vector), chol.inverse()))
    }

    /// Propagate each listed subject with its model; everything else is static.
    pub fn predict(&mut self, models: &[(Subject, &LinearDynamics)]) -> Result<()> {
        let (mean, cov) = self.moments()?;
        let n = self.dim();
        let mut f = DMatrix::identity(n, n);
        let mut q = DMatrix::zeros(n, n);
        let mut offset_term = DVector::zeros(n);
        for (subject, model) in models {
            let (o, d) = self.block(*subject)?;
            f.view_mut((o, o), (d, d)).copy_from(model.transition());
            q.view_mut((o, o), (d, d)).copy_from(model.noise());
            let drift = model.mean_step(&DVector::zeros(d));
            offset_term.rows_mut(o, d).copy_from(&drift);
        }
        let mean = &f * mean + offset_term;
        let mut cov = &f * cov * f.transpose() + q;
        cov = (&cov + cov.transpose()) * 0.5;
        let info = cov
            .cholesky()
            .ok_or_else(|| Error::numerical("predicted covariance not PD", f64::INFINITY))?
            .inverse();
        self.info_vector = &info * mean;
        self.info_matrix = info;
        Ok(())
    }

    /// Add the measurement `y = Σ_b H_b x_b + v`, `v ~ 𝒩(0, R)`.
    pub fn update(&mut self, h_blocks: &[(Subject, DMatrix<f64>)], y: &DVector<f64>, r: &DMatrix<f64>) -> Result<()> {
        let mut h = DMatrix::zeros(y.len(), self.dim());
        for (subject, hb) in h_blocks {
            let (o, d) = self.block(*subject)?;
            h.view_mut((0, o), (y.len(), d)).copy_from(hb);
        }
        let r_inv = r
            .clone()
            .cholesky()
            .ok_or_else(|| Error::numerical("measurement covariance not PD", f64::INFINITY))?
            .inverse();
        let ht_ri = h.transpose() * r_inv;
        self.info_matrix += &ht_ri * &h;
        self.info_vector += &ht_ri * y;
        Ok(())
    }

    /// Mean and covariance over `subjects`, stacked in the given order.
    pub fn marginal(&self, subjects: &[Subject]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let (mean, cov) = self.moments()?;
        let idx: Vec<usize> = subjects
            .iter()
            .map(|s| self.block(*s).map(|(o, d)| o..o + d))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        Ok((mean.select_rows(&idx), cov.select_rows(&idx).select_columns(&idx)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn single_update_adds_information() {
        let s = Subject::Label(0);
        let mut cf = CentralizedFilter::new(vec![(s, dvector![0.0], dmatrix![100.0])]).unwrap();
        cf.update(&[(s, dmatrix![1.0])], &dvector![2.0], &dmatrix![1.0]).unwrap();
        assert!((cf.info_matrix[(0, 0)] - 1.01).abs() < 1e-15);
        assert_eq!(cf.info_vector[0], 2.0);
    }

    #[test]
    fn prediction_grows_covariance_by_q() {
        let s = Subject::Target(1);
        let model = LinearDynamics::constant_velocity(0.1, 0.08).unwrap();
        let mut cf =
            CentralizedFilter::new(vec![(s, DVector::zeros(4), DMatrix::identity(4, 4))]).unwrap();
        cf.predict(&[(s, &model)]).unwrap();
        let (_, cov) = cf.marginal(&[s]).unwrap();
        let f = model.transition();
        let expected = f * f.transpose() + model.noise();
        assert!((cov - expected).amax() < 1e-12);
    }
}
