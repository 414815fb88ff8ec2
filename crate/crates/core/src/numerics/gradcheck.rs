use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{NodeId, NumericsError, ParamId, ParameterStore, Tape};

#[derive(Clone, Debug, PartialEq)]
pub struct CoordFailure {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub error: f64,
}

/// Outcome of [`finite_difference_check`]. `error` is
/// `|analytic - numeric| / max(1, |analytic|)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FdReport {
    pub checked: usize,
    pub max_error: f64,
    pub failures: Vec<CoordFailure>,
}

impl FdReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn eval<F>(build: &F, store: &ParameterStore<f64>) -> Result<f64, NumericsError>
where
    F: for<'a> Fn(&mut Tape<'a, f64>) -> Result<NodeId, NumericsError>,
{
    let mut tape = Tape::new(store);
    let root = build(&mut tape)?;
    tape.scalar(root).ok_or(NumericsError::NonScalarRoot {
        shape: tape.shape(root),
    })
}

/// Compares tape gradients of the scalar built by `build` against central
/// differences `(L(θ+h) - L(θ-h)) / 2h` on `samples` coordinates chosen with
/// `seed` (all coordinates when `samples` covers them).
pub fn finite_difference_check<F>(
    build: F,
    store: &mut ParameterStore<f64>,
    samples: usize,
    h: f64,
    tol: f64,
    seed: u64,
) -> Result<FdReport, NumericsError>
where
    F: for<'a> Fn(&mut Tape<'a, f64>) -> Result<NodeId, NumericsError>,
{
    let analytic = {
        let mut tape = Tape::new(&*store);
        let root = build(&mut tape)?;
        tape.backward(root)?
    };

    let coords: Vec<(ParamId, usize)> = store
        .iter()
        .flat_map(|(id, _, t)| (0..t.len()).map(move |k| (id, k)))
        .collect();
    let picked: Vec<usize> = if samples >= coords.len() {
        (0..coords.len()).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = rand::seq::index::sample(&mut rng, coords.len(), samples).into_vec();
        v.sort_unstable();
        v
    };

    let mut report = FdReport::default();
    for c in picked {
        let (id, k) = coords[c];
        let orig = store.get(id).as_slice()[k];
        store.get_mut(id).as_mut_slice()[k] = orig + h;
        let plus = eval(&build, store)?;
        store.get_mut(id).as_mut_slice()[k] = orig - h;
        let minus = eval(&build, store)?;
        store.get_mut(id).as_mut_slice()[k] = orig;

        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic.get(id).as_slice()[k];
        let error = (a - numeric).abs() / a.abs().max(1.0);
        report.checked += 1;
        report.max_error = report.max_error.max(error);
        if error > tol {
            report.failures.push(CoordFailure {
                param: store.name(id).to_string(),
                index: k,
                analytic: a,
                numeric,
                error,
            });
        }
    }
    Ok(report)
}
