use rayon::prelude::*;

use super::{CqKind, CqVerdict, Witness};
use crate::error::{Error, Result};
use crate::expr::EvalPoint;
use crate::model::ProblemSpec;
use crate::nonsmooth::{active_set, DEFAULT_EPS_ACT};
use crate::numkernel::{cone_membership, independent_subset, numeric_rank, positive_linear_dependence_tol, ConeDescription, Mat};
use crate::rng::{stream_rng, uniform_ball};
use crate::scalar::Real;

/// Largest family (active signed gradients plus equalities) for subset enumeration.
pub const MAX_FAMILY: usize = 12;

#[derive(Clone, Debug, PartialEq)]
pub struct NeighborhoodOptions {
    pub radius: f64,
    pub samples: usize,
    pub rank_tol: f64,
    pub seed: u64,
}

impl Default for NeighborhoodOptions {
    fn default() -> Self {
        Self { radius: 1e-3, samples: 64, rank_tol: 1e-8, seed: 0 }
    }
}

/// Gradients of the signed family (active `g`, active box faces) and of `h`.
struct Family<T> {
    signed: Vec<Vec<T>>,
    free: Vec<Vec<T>>,
}

struct Setup<'a, T: Real> {
    ps: &'a ProblemSpec,
    t: T,
    active_g: Vec<usize>,
    faces: Vec<Vec<T>>,
    labels: Vec<String>,
}

impl<T: Real> Setup<'_, T> {
    fn family_at(&self, z: &[T]) -> Result<Family<T>> {
        let p = EvalPoint::from_z(self.t, z, self.ps.n);
        let mut signed = Vec::with_capacity(self.active_g.len() + self.faces.len());
        for &i in &self.active_g {
            signed.push(self.ps.g[i].gradient(&p)?.z().to_vec());
        }
        signed.extend(self.faces.iter().cloned());
        let free = self.ps.h.iter().map(|h| h.gradient(&p).map(|g| g.z().to_vec())).collect::<Result<_>>()?;
        Ok(Family { signed, free })
    }
}

fn rank_of<T: Real>(vs: &[&Vec<T>], tol: T) -> usize {
    if vs.is_empty() {
        return 0;
    }
    let rows: Vec<Vec<T>> = vs.iter().map(|v| (*v).clone()).collect();
    numeric_rank(&Mat::from_rows(&rows), tol)
}

fn pick<T>(vs: &[Vec<T>], mask: u32) -> Vec<&Vec<T>> {
    vs.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, v)| v).collect()
}

fn describe(labels: &[String], s: usize, imask: u32, jmask: u32) -> String {
    let mut names: Vec<String> = labels.iter().enumerate().filter(|(i, _)| imask >> i & 1 == 1).map(|(_, l)| l.clone()).collect();
    names.extend((0..s).filter(|j| jmask >> j & 1 == 1).map(|j| format!("h{}", j + 1)));
    names.join(",")
}

/// Sampling check of CPLD, RCPLD or CRSC at `z`.
///
/// A "holds" verdict means no violation appeared among `opts.samples`
/// points drawn uniformly from `B(z, opts.radius)`.
pub fn check_neighborhood_cq<T: Real>(kind: CqKind, ps: &ProblemSpec, z: &EvalPoint<T>, opts: &NeighborhoodOptions) -> Result<CqVerdict<T>> {
    if !matches!(kind, CqKind::Cpld | CqKind::Rcpld | CqKind::Crsc) {
        return Err(Error::Unsupported(format!("{} is not a neighborhood check", kind.name())));
    }
    if ps.g.iter().chain(&ps.h).any(|e| !e.is_smooth()) {
        return Err(Error::Unsupported("neighborhood checks need smooth g and h".into()));
    }
    let info = active_set(ps, z, T::lit(DEFAULT_EPS_ACT))?;
    let n = ps.n;
    let faces: Vec<Vec<T>> = info
        .face_generators::<T>(ps.m)
        .into_iter()
        .map(|f| {
            let mut v = vec![T::zero(); n];
            v.extend(f);
            v
        })
        .collect();
    let mut labels: Vec<String> = info.active_g.iter().map(|i| format!("g{}", i + 1)).collect();
    labels.extend(info.lower_active.iter().map(|j| format!("u{}>=lb", j + 1)));
    labels.extend(info.upper_active.iter().map(|j| format!("u{}<=ub", j + 1)));
    let family_size = labels.len() + ps.s;
    if family_size > MAX_FAMILY {
        return Err(Error::Unsupported(format!("{family_size} active constraints exceed the subset bound {MAX_FAMILY}")));
    }
    let setup = Setup { ps, t: z.t, active_g: info.active_g.clone(), faces, labels };
    let tol = T::lit(opts.rank_tol);
    let center = z.z();
    let at_z = setup.family_at(&center)?;

    let radius = T::lit(opts.radius);
    let pts: Vec<Vec<T>> = (0..opts.samples).map(|k| uniform_ball(&mut stream_rng(opts.seed, k as u64), &center, radius)).collect();
    let fams: Vec<Family<T>> = pts.par_iter().map(|p| setup.family_at(p)).collect::<Result<_>>()?;

    let mut v = CqVerdict::new(kind);
    v.empirical = true;
    v.samples = opts.samples;
    v.note = format!("sampled radius {}", opts.radius);
    let ns = at_z.signed.len();
    let s = ps.s;

    // Families positively dependent at z that must stay rank-deficient.
    let mut must_stay_dependent: Vec<(u32, u32)> = Vec::new();
    let dependent_at_z = |imask: u32, jmask: u32| -> Result<bool> {
        let si: Vec<Vec<T>> = pick(&at_z.signed, imask).into_iter().cloned().collect();
        let fj: Vec<Vec<T>> = pick(&at_z.free, jmask).into_iter().cloned().collect();
        Ok(positive_linear_dependence_tol(&si, &fj, tol)?.dependent)
    };

    match kind {
        CqKind::Cpld => {
            for imask in 0..(1u32 << ns) {
                for jmask in 0..(1u32 << s) {
                    if (imask | jmask) != 0 && dependent_at_z(imask, jmask)? {
                        must_stay_dependent.push((imask, jmask));
                    }
                }
            }
        }
        CqKind::Rcpld => {
            let basis = independent_subset(&at_z.free, tol);
            let rank_h = basis.len();
            let jmask = basis.iter().fold(0u32, |m, &j| m | 1 << j);
            for (k, f) in fams.iter().enumerate() {
                let r = rank_of(&f.free.iter().collect::<Vec<_>>(), tol);
                if r != rank_h {
                    v.holds = Some(false);
                    v.witness = Some(Witness::Sample { z: pts[k].clone(), detail: format!("rank of equality gradients {rank_h} at the point, {r} at sample") });
                    return Ok(v);
                }
            }
            for imask in 1..(1u32 << ns) {
                if dependent_at_z(imask, jmask)? {
                    must_stay_dependent.push((imask, jmask));
                }
            }
        }
        CqKind::Crsc => {
            let polar = ConeDescription::new(at_z.signed.clone(), at_z.free.clone());
            let mut jminus = 0u32;
            for (i, a) in at_z.signed.iter().enumerate() {
                let neg: Vec<T> = a.iter().map(|&c| -c).collect();
                if cone_membership(&neg, &polar)?.member {
                    jminus |= 1 << i;
                }
            }
            let all_h = (1u32 << s) - 1;
            let fam = |f: &Family<T>| {
                let mut vs = pick(&f.signed, jminus);
                vs.extend(f.free.iter());
                rank_of(&vs, tol)
            };
            let r0 = fam(&at_z);
            for (k, f) in fams.iter().enumerate() {
                let r = fam(f);
                if r != r0 {
                    v.holds = Some(false);
                    v.witness = Some(Witness::Sample {
                        z: pts[k].clone(),
                        detail: format!("rank of {{{}}} is {r0} at the point, {r} at sample", describe(&setup.labels, s, jminus, all_h)),
                    });
                    return Ok(v);
                }
            }
            v.holds = Some(true);
            return Ok(v);
        }
        _ => unreachable!(),
    }

    for (imask, jmask) in must_stay_dependent {
        let size = imask.count_ones() + jmask.count_ones();
        for (k, f) in fams.iter().enumerate() {
            let mut vs = pick(&f.signed, imask);
            vs.extend(pick(&f.free, jmask));
            if rank_of(&vs, tol) == size as usize {
                v.holds = Some(false);
                v.witness = Some(Witness::Sample {
                    z: pts[k].clone(),
                    detail: format!("{{{}}} is independent at sample", describe(&setup.labels, s, imask, jmask)),
                });
                return Ok(v);
            }
        }
    }
    v.holds = Some(true);
    Ok(v)
}
