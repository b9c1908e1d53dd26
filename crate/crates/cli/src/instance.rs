//! Turning an [`InstanceSpec`] into data, and data into files.

use std::path::Path;
use std::sync::Arc;

use iterreg::datagen::{
    certified_instance, column_scaled_instance, completion_instance, illposed_diag_instance,
    noisy_certified_instance, parse_libsvm, read_completion_instance, read_meta, read_sparse_instance,
    sparse_instance, unfeasible_toy, write_completion_instance, write_sparse_instance, CompletionInstance,
    InstanceMeta, SparseInstance, INSTANCE_VERSION,
};
use iterreg::diagnostics::SaddleCertificate;
use iterreg::io;
use iterreg::linops::{DenseMatrix, LinOp};
use iterreg::pdsolver::Problem;
use iterreg::regularizers::Regularizer;

use crate::config::{InstanceSpec, RegKind};
use crate::error::CliError;

/// Dense-design data: generated, read back from disk or parsed from LIBSVM.
#[derive(Clone, Debug)]
pub struct Design {
    pub a: DenseMatrix,
    pub b: Vec<f64>,
    pub b_star: Option<Vec<f64>>,
    pub x_true: Option<Vec<f64>>,
    pub delta: f64,
    pub cert: Option<SaddleCertificate>,
}

impl Design {
    fn from_sparse(inst: SparseInstance, cert: Option<SaddleCertificate>) -> Self {
        Design {
            b: inst.b_delta,
            b_star: Some(inst.b_star),
            x_true: Some(inst.x_true),
            delta: inst.delta,
            cert,
            a: inst.a,
        }
    }
}

pub enum Data {
    Design(Design),
    Completion(CompletionInstance),
    /// A prebuilt problem (toy and ill-posed systems).
    Fixed { problem: Problem, delta: f64 },
}

impl Data {
    pub fn delta(&self) -> f64 {
        match self {
            Data::Design(d) => d.delta,
            Data::Completion(c) => c.delta,
            Data::Fixed { delta, .. } => *delta,
        }
    }

    pub fn problem(&self, reg: Option<RegKind>) -> Result<Problem, CliError> {
        let (op, b, default, norm): (Arc<dyn LinOp>, Vec<f64>, Regularizer, Option<f64>) = match self {
            Data::Design(d) => (Arc::new(d.a.clone()), d.b.clone(), Regularizer::L1, None),
            Data::Completion(c) => (
                Arc::new(c.mask.clone()),
                c.b_delta.clone(),
                Regularizer::Nuclear { rows: c.d, cols: c.d },
                Some(1.0),
            ),
            Data::Fixed { problem, .. } => (problem.op.clone(), problem.b.clone(), problem.reg.clone(), Some(problem.a_norm())),
        };
        let reg = match reg {
            None => default,
            Some(RegKind::L1) => Regularizer::L1,
            Some(RegKind::SqL2) => Regularizer::SqL2,
            Some(RegKind::NonNeg) => Regularizer::NonNeg,
            Some(RegKind::Zero) => Regularizer::Zero,
            Some(RegKind::Nuclear) => match self {
                Data::Completion(c) => Regularizer::Nuclear { rows: c.d, cols: c.d },
                _ => return Err(CliError::Config("the nuclear norm needs a completion instance".into())),
            },
        };
        let p = Problem::new(op, b, reg)?;
        Ok(match norm {
            Some(n) => p.with_norm(n),
            None => p,
        })
    }

    /// `b*` when known, for the feasibility column.
    pub fn b_star(&self) -> Option<Vec<f64>> {
        match self {
            Data::Design(d) => d.b_star.clone(),
            Data::Completion(c) => Some(c.mask.apply(c.b_star.data())),
            Data::Fixed { .. } => None,
        }
    }

    pub fn cert(&self) -> Option<&SaddleCertificate> {
        match self {
            Data::Design(d) => d.cert.as_ref(),
            _ => None,
        }
    }
}

pub fn build(spec: &InstanceSpec, seed: u64) -> Result<Data, CliError> {
    Ok(match spec {
        InstanceSpec::Sparse { n, d, rho, support_frac, snr } => {
            Data::Design(Design::from_sparse(sparse_instance(*n, *d, *rho, *support_frac, *snr, seed)?, None))
        }
        InstanceSpec::ColumnScaled { n, d, rho, support_frac, snr, scale_lo, scale_hi } => Data::Design(
            Design::from_sparse(
                column_scaled_instance(*n, *d, *rho, *support_frac, *snr, *scale_lo, *scale_hi, seed)?,
                None,
            ),
        ),
        InstanceSpec::Certified { n, d, s, delta, max_tries } => {
            let (inst, cert) = if *delta > 0.0 {
                noisy_certified_instance(*n, *d, *s, *delta, seed, *max_tries)?
            } else {
                certified_instance(*n, *d, *s, seed, *max_tries)?
            };
            Data::Design(Design::from_sparse(inst, Some(cert)))
        }
        InstanceSpec::Completion { d, rank, hidden_frac, delta } => {
            Data::Completion(completion_instance(*d, *rank, *hidden_frac, *delta, seed)?)
        }
        InstanceSpec::IllPosed { n, delta } => {
            let inst = illposed_diag_instance(*n, *delta)?;
            Data::Fixed { problem: inst.problem, delta: *delta }
        }
        InstanceSpec::UnfeasibleToy {} => Data::Fixed { problem: unfeasible_toy(), delta: 0.0 },
        InstanceSpec::Dir { path } => read_dir(path)?,
        InstanceSpec::Libsvm { path } => {
            let (m, labels) = parse_libsvm(path)?;
            Data::Design(Design {
                a: m.to_dense(),
                b: labels,
                b_star: None,
                x_true: None,
                delta: 0.0,
                cert: None,
            })
        }
    })
}

const YSTAR: &str = "ystar.csv";

fn read_dir(dir: &Path) -> Result<Data, CliError> {
    let meta = read_meta(dir)?;
    if meta.generator == "completion" {
        return Ok(Data::Completion(read_completion_instance(dir)?));
    }
    let inst = read_sparse_instance(dir)?;
    let cert = if dir.join(YSTAR).exists() {
        Some(SaddleCertificate {
            x_star: inst.x_true.clone(),
            y_star: io::load_vector(&dir.join(YSTAR))?,
            b_star: inst.b_star.clone(),
            delta: inst.delta,
        })
    } else {
        None
    };
    Ok(Data::Design(Design::from_sparse(inst, cert)))
}

/// Write a generated instance; directories already holding one are kept
/// unless `force`.
pub fn write(dir: &Path, spec: &InstanceSpec, seed: u64, data: &Data, force: bool) -> Result<(), CliError> {
    let meta = InstanceMeta {
        generator: spec.generator().into(),
        version: INSTANCE_VERSION,
        delta: data.delta(),
        snr: match spec {
            InstanceSpec::Sparse { snr, .. } | InstanceSpec::ColumnScaled { snr, .. } => *snr,
            _ => None,
        },
        seeds: vec![seed],
        params: spec.params(),
    };
    match data {
        Data::Design(d) => {
            let inst = SparseInstance {
                a: d.a.clone(),
                x_true: d.x_true.clone().unwrap_or_default(),
                b_star: d.b_star.clone().unwrap_or_default(),
                b_delta: d.b.clone(),
                delta: d.delta,
                snr: meta.snr,
                seed,
            };
            write_sparse_instance(dir, &inst, &meta, force)?;
            if let Some(c) = &d.cert {
                io::save_vector(&dir.join(YSTAR), &c.y_star)?;
            }
        }
        Data::Completion(c) => write_completion_instance(dir, c, &meta, force)?,
        Data::Fixed { .. } => {
            return Err(CliError::Config(format!(
                "generator {:?} has nothing to write",
                spec.generator()
            )))
        }
    }
    Ok(())
}
