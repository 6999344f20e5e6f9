use std::time::Instant;

use vitals_core::checks::{gradcheck_suite, CheckItem};

#[test]
fn suite_passes_on_every_item() {
    let start = Instant::now();
    let items = gradcheck_suite(1.0).unwrap();
    for item in &items {
        println!(
            "{:<20} {:.3e} (tol {:.0e})",
            item.name, item.report.max_rel_error, item.tolerance
        );
    }
    let failed: Vec<&CheckItem> = items.iter().filter(|i| !i.passed()).collect();
    assert!(failed.is_empty(), "{failed:#?}");
    assert!(start.elapsed().as_secs() < 60);
}

#[test]
fn suite_covers_layers_and_losses() {
    let items = gradcheck_suite(1.0).unwrap();
    let names: Vec<&str> = items.iter().map(|i| i.name.as_str()).collect();
    for want in ["conv1d", "relu", "maxpool", "batchnorm", "dense", "gap", "residual"] {
        assert!(names.contains(&want), "missing {want}");
    }
    let losses = names.iter().filter(|n| n.starts_with("loss_")).count();
    assert_eq!(losses, 4);
    assert!(items.len() - losses >= 7);
}

#[test]
fn planted_fault_fails_every_item() {
    let items = gradcheck_suite(1.1).unwrap();
    for item in &items {
        assert!(item.report.max_rel_error > 1e-2, "{item:?}");
    }
}
