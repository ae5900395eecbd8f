use std::collections::HashMap;

use stfusion::dataset::{
    class_parts, clip_geometry, generate_background, generate_clip, generate_dataset, ClipSpec, DatasetConfig, Motion,
    Split, VideoClip, DEFAULT_TRAIN_RATIO, NUM_CLASSES, REFERENCE_CLASS_TOTALS,
};
use stfusion::Error;

/// Coverage-weighted centroid `(row, col)` of frame `t`, recovering each
/// pixel's coverage from its blend between background and shape color.
fn centroid(clip: &VideoClip, bg: &[f64], color: [f64; 3], t: usize) -> (f64, f64) {
    let (h, w) = (clip.height(), clip.width());
    let frame = clip.frame(t);
    let (mut m, mut sy, mut sx) = (0.0, 0.0, 0.0);
    for i in 0..h {
        for j in 0..w {
            let k = (i * w + j) * 3;
            let a = (0..3)
                .map(|c| (frame.data()[k + c] as f64 - bg[k + c]) / (color[c] - bg[k + c]))
                .sum::<f64>()
                / 3.0;
            m += a;
            sy += a * i as f64;
            sx += a * j as f64;
        }
    }
    (sy / m, sx / m)
}

#[test]
fn rendered_centroids_follow_the_geometry() {
    for class in 0..NUM_CLASSES {
        for seed in 0..4 {
            let spec = ClipSpec {
                noise_level: 0.0,
                ..ClipSpec::new(class, 100 + seed)
            };
            let clip = generate_clip(&spec).unwrap();
            let geom = clip_geometry(&spec);
            let bg = generate_background(&spec);
            for t in 0..spec.num_frames {
                let (cy, cx) = centroid(&clip, &bg, geom.color, t);
                let (py, px) = geom.position(t);
                assert!(
                    (cy - py).abs() < 0.5 && (cx - px).abs() < 0.5,
                    "class {class} seed {seed} frame {t}: centroid ({cy:.2}, {cx:.2}) vs ({py:.2}, {px:.2})"
                );
            }
        }
    }
}

#[test]
fn oscillating_track_is_a_sinusoid_and_stationary_track_is_fixed() {
    for class in 0..NUM_CLASSES {
        let spec = ClipSpec::new(class, 9);
        let g = clip_geometry(&spec);
        let xs: Vec<f64> = (0..spec.num_frames).map(|t| g.position(t).1).collect();
        match class_parts(class).1 {
            Motion::Stationary => assert!(xs.iter().all(|&x| x == xs[0])),
            Motion::Oscillating => {
                let spread = xs.iter().cloned().fold(f64::MIN, f64::max) - xs.iter().cloned().fold(f64::MAX, f64::min);
                assert!(spread > g.amplitude, "spread {spread} amplitude {}", g.amplitude);
            }
        }
    }
}

#[test]
fn background_is_shared_by_all_clips() {
    let a = generate_background(&ClipSpec::new(0, 1));
    let b = generate_background(&ClipSpec::new(5, 2));
    assert_eq!(a, b);
}

#[test]
fn same_seed_gives_identical_manifest_and_bytes() {
    let cfg = DatasetConfig {
        class_counts: vec![2, 3, 2, 3, 2, 3],
        num_frames: 5,
        ..DatasetConfig::default()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ma = generate_dataset(&cfg, a.path()).unwrap();
    let mb = generate_dataset(&cfg, b.path()).unwrap();
    assert_eq!(ma.entries, mb.entries);
    assert_eq!(ma.to_text(), mb.to_text());
    for e in &ma.entries {
        let x = std::fs::read(ma.clip_path(e)).unwrap();
        let y = std::fs::read(mb.clip_path(e)).unwrap();
        assert!(x == y, "{} differs", e.path.display());
    }
}

#[test]
fn splits_are_stratified() {
    let cfg = DatasetConfig {
        class_counts: vec![10; 6],
        train_ratio: 0.6,
        num_frames: 3,
        ..DatasetConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let m = generate_dataset(&cfg, dir.path()).unwrap();
    let mut per: HashMap<(usize, Split), usize> = HashMap::new();
    for e in &m.entries {
        *per.entry((e.label, e.split)).or_default() += 1;
    }
    for c in 0..NUM_CLASSES {
        assert_eq!(per[&(c, Split::Train)], 6);
        assert_eq!(per[&(c, Split::Test)], 4);
    }
}

#[test]
fn default_config_mirrors_reference_totals() {
    let cfg = DatasetConfig::default();
    assert_eq!(cfg.class_counts.len(), NUM_CLASSES);
    for (&n, &r) in cfg.class_counts.iter().zip(REFERENCE_CLASS_TOTALS.iter()) {
        assert!((n as f64 - r as f64 / 10.0).abs() <= 0.5);
        let train = cfg.train_count(n) as f64;
        assert!((train - n as f64 * DEFAULT_TRAIN_RATIO).abs() <= 1.0);
    }
    assert!((DEFAULT_TRAIN_RATIO - 0.578).abs() < 0.001);
}

#[test]
fn frames_too_small_for_the_motion_are_a_config_error() {
    let cfg = DatasetConfig {
        height: 20,
        width: 20,
        ..DatasetConfig::default()
    };
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    let ok = DatasetConfig {
        height: stfusion::dataset::MIN_HEIGHT,
        width: stfusion::dataset::MIN_WIDTH,
        num_frames: 3,
        ..DatasetConfig::default()
    };
    ok.validate().unwrap();
    for c in 0..NUM_CLASSES {
        generate_clip(&ok.clip_spec(c, 0)).unwrap();
    }
}
