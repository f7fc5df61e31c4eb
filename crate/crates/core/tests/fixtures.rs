use std::path::Path;

use spoofgap::config::DEFAULT_SEED;
use spoofgap::corpus::{load_manifest, Label, Split};
use spoofgap::dsp::{read_wav, stft_power, StftConfig};
use spoofgap::fixtures::{default_fixture_specs, generate_fixture_corpora};
use spoofgap::quality::compute_ltas;

fn pooled_ltas(manifest: &Path) -> Vec<f64> {
    let m = load_manifest(manifest).unwrap();
    let mut acc = vec![0.0; 257];
    for r in &m.records {
        let w = read_wav(&m.audio_path(r)).unwrap();
        for (a, v) in acc.iter_mut().zip(compute_ltas(&stft_power(&w, &StftConfig::ANALYSIS).unwrap())) {
            *a += v / m.records.len() as f64;
        }
    }
    acc
}

#[test]
fn manifests_counts_and_ltas_separation() {
    let tmp = tempfile::tempdir().unwrap();
    let set = generate_fixture_corpora(&default_fixture_specs(3, DEFAULT_SEED), tmp.path()).unwrap();
    assert_eq!(set.manifests.len(), 3);
    for p in &set.manifests {
        let m = load_manifest(p).unwrap();
        assert_eq!(m.records.len(), 36);
        assert_eq!(m.class_counts(Split::Train), (6, 12));
        assert_eq!(m.class_counts(Split::Eval), (6, 12));
        m.validate_audio().unwrap();
        assert!(m.records.iter().any(|r| r.label == Label::Spoof));
    }
    let ltas: Vec<Vec<f64>> = set.manifests.iter().map(|p| pooled_ltas(p)).collect();
    for i in 0..3 {
        for j in i + 1..3 {
            let far = ltas[i].iter().zip(&ltas[j]).filter(|(a, b)| (*a - *b).abs() > 3.0).count();
            assert!(far >= 20, "c{} vs c{}: {far} bins differ by more than 3 dB", i + 1, j + 1);
        }
    }
}

#[test]
fn regeneration_is_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let specs = default_fixture_specs(2, 77);
    generate_fixture_corpora(&specs, a.path()).unwrap();
    generate_fixture_corpora(&specs, b.path()).unwrap();
    for c in ["c1", "c2"] {
        let ma = std::fs::read(a.path().join(c).join("manifest.csv")).unwrap();
        assert_eq!(ma, std::fs::read(b.path().join(c).join("manifest.csv")).unwrap());
        for e in std::fs::read_dir(a.path().join(c).join("wav")).unwrap() {
            let p = e.unwrap().path();
            let rel = p.strip_prefix(a.path()).unwrap();
            assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(b.path().join(rel)).unwrap(), "{}", rel.display());
        }
    }
    assert_eq!(
        std::fs::read(a.path().join("xvectors.txt")).unwrap(),
        std::fs::read(b.path().join("xvectors.txt")).unwrap()
    );
}

#[test]
fn duplicate_corpus_ids_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let mut specs = default_fixture_specs(2, 1);
    specs[1].corpus_id = "c1".into();
    assert!(generate_fixture_corpora(&specs, tmp.path()).is_err());
}
