mod common;

use common::{fixture_batch, fixture_model, small_hyper};
use kdar::model::AblationFlags;
use kdar::numerics::finite_difference_check;

fn check(flags: AblationFlags) {
    let (model, mut store) = fixture_model::<f64>(small_hyper(), flags, 3);
    let batch = fixture_batch();
    let report = finite_difference_check(
        |tape| {
            let reps = model.forward(tape)?;
            Ok(model.loss(tape, &reps, &batch)?.total)
        },
        &mut store,
        usize::MAX,
        1e-4,
        1e-3,
        0,
    )
    .unwrap();
    assert!(
        report.passed(),
        "{flags:?}: {:?}",
        &report.failures[..report.failures.len().min(5)]
    );
    assert_eq!(report.checked, store.num_coords());
}

#[test]
fn full_model_gradients_match_finite_differences() {
    check(AblationFlags::NONE);
}

#[test]
fn ablated_model_gradients_match_finite_differences() {
    for (_, flags) in AblationFlags::VARIANTS.iter().skip(1) {
        check(*flags);
    }
}
