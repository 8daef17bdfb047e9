//! Write-then-parse round trips and the separability oracle for generated data.

use hwpd::signal_io::*;

#[test]
fn synthetic_tablet_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let seq = generate_synthetic(&SyntheticParams::new(1, (400, 400), 0.7, 3)).unwrap().remove(0);
    for map in [ColumnMap::default(), ColumnMap::identity()] {
        let path = dir.path().join("s.svc");
        write_tablet_file(&seq, &map, &path).unwrap();
        let back = parse_tablet_file(&path, &map).unwrap();
        assert_eq!(back.len(), 400);
        assert_eq!(back.channels, seq.channels);
    }
}

#[test]
fn smartpen_sinusoids_round_trip_in_text() {
    let dir = tempfile::tempdir().unwrap();
    let n = 257;
    let mut text = String::new();
    for t in 0..n {
        let row: Vec<String> = (0..6).map(|c| (((t as f64) * 0.05 * (c + 1) as f64).sin() * 1000.0 + c as f64).to_string()).collect();
        text.push_str(&row.join(" "));
        text.push('\n');
    }
    let src = dir.path().join("pen.txt");
    std::fs::write(&src, &text).unwrap();
    let seq = parse_smartpen_file(&src).unwrap();
    assert_eq!(seq.len(), n);
    let out = dir.path().join("pen2.txt");
    write_smartpen_file(&seq, &out).unwrap();
    assert_eq!(std::fs::read_to_string(&out).unwrap(), text);
    assert_eq!(parse_smartpen_file(&out).unwrap().channels, seq.channels);
}

#[test]
fn manifest_of_72_files() {
    let dir = tempfile::tempdir().unwrap();
    let seqs = generate_synthetic(&SyntheticParams::new(36, (50, 80), 0.5, 4)).unwrap();
    let mut entries = Vec::new();
    for s in &seqs {
        let name = format!("{}.svc", s.subject_id);
        write_tablet_file(s, &ColumnMap::default(), dir.path().join(&name)).unwrap();
        entries.push(ManifestEntry {
            path: name.into(),
            subject_id: s.subject_id.clone(),
            task_id: "spiral".into(),
            label: s.label,
        });
    }
    let path = dir.path().join("manifest.csv");
    write_manifest(&DatasetManifest::new(entries, DatasetFormat::TabletSvc), &path).unwrap();
    let loaded = load_dataset(&read_manifest(&path, DatasetFormat::TabletSvc).unwrap()).unwrap();
    assert_eq!(loaded.len(), 72);
    assert_eq!(loaded.iter().filter(|s| s.label == Label::Pd).count(), 36);
    for (a, b) in loaded.iter().zip(&seqs) {
        assert_eq!(a.subject_id, b.subject_id);
        assert_eq!(a.channels, b.channels);
    }
}

/// Mean absolute derivative of pen speed, from the raw channels alone.
fn mean_abs_speed_change(seq: &SignalSequence) -> f64 {
    let (x, y, t) = (seq.channel("x").unwrap(), seq.channel("y").unwrap(), seq.channel("timestamp").unwrap());
    let dt = |i: usize| ((t[i] - t[i - 1]) * 1e-3).max(1.0 / TABLET_SAMPLE_RATE_HZ);
    let speed: Vec<f64> = (1..x.len()).map(|i| (x[i] - x[i - 1]).hypot(y[i] - y[i - 1]) / dt(i)).collect();
    let acc: Vec<f64> = (1..speed.len()).map(|i| (speed[i] - speed[i - 1]).abs() / dt(i + 1)).collect();
    acc.iter().sum::<f64>() / acc.len() as f64
}

/// Best accuracy of a single threshold over a scalar, either orientation.
fn best_threshold_accuracy(values: &[(f64, bool)]) -> f64 {
    let mut best: f64 = 0.0;
    for &(cut, _) in values {
        let above = values.iter().filter(|&&(v, pd)| (v >= cut) == pd).count() as f64 / values.len() as f64;
        best = best.max(above).max(1.0 - above);
    }
    best
}

#[test]
fn separable_synthetic_passes_threshold_oracle() {
    let seqs = generate_synthetic(&SyntheticParams::new(20, (200, 400), 1.0, 1)).unwrap();
    let values: Vec<(f64, bool)> = seqs.iter().map(|s| (mean_abs_speed_change(s), s.label.is_positive())).collect();
    let acc = best_threshold_accuracy(&values);
    assert!(acc >= 0.95, "threshold accuracy {acc}");
}

#[test]
fn zero_separation_is_not_separable() {
    let mut accs = Vec::new();
    for seed in 0..5 {
        let seqs = generate_synthetic(&SyntheticParams::new(20, (200, 400), 0.0, seed)).unwrap();
        let values: Vec<(f64, bool)> = seqs.iter().map(|s| (mean_abs_speed_change(s), s.label.is_positive())).collect();
        accs.push(best_threshold_accuracy(&values));
    }
    // the best of 40 cut points overfits a little even without signal
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    assert!(mean < 0.8, "{accs:?}");
}
