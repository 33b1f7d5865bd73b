use std::f64::consts::PI;

use listenkit::audio::Waveform;
use listenkit::features::{
    decode_features, encode_features, hann, logmel, mel_band_edges, mel_filterbank, read_features,
    stft_magnitude, write_features, LogMel, LogMelExtractor, MelConfig, StftConfig,
};
use listenkit::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tone(freq: f64, seconds: f64, amp: f64) -> Waveform {
    let n = (32000.0 * seconds) as usize;
    let x = (0..n)
        .map(|i| (amp * (2.0 * PI * freq * i as f64 / 32000.0).sin()) as f32)
        .collect();
    Waveform::mono(x, 32000).unwrap()
}

fn argmax(row: &[f64]) -> usize {
    (0..row.len())
        .max_by(|&a, &b| row[a].total_cmp(&row[b]))
        .unwrap()
}

#[test]
fn one_khz_tone_peaks_at_bin_32_in_every_unpadded_frame() {
    let cfg = StftConfig {
        center: false,
        ..Default::default()
    };
    let mag = stft_magnitude(&tone(1000.0, 1.0, 1.0), &cfg).unwrap();
    assert_eq!(mag[0].len() / 513, 62);
    for row in mag[0].chunks(513) {
        assert_eq!(argmax(row), 32);
    }
}

#[test]
fn reflect_padding_notches_the_first_frame_of_a_sine() {
    let mag = stft_magnitude(&tone(1000.0, 1.0, 1.0), &StftConfig::default()).unwrap();
    let rows: Vec<&[f64]> = mag[0].chunks(513).collect();
    assert_eq!(rows.len(), 64);
    // Frames whose window lies inside the clip.
    for row in &rows[2..62] {
        assert_eq!(argmax(row), 32);
    }
    // The mirrored half is the negated continuation, so bin 32 cancels at the clip start.
    assert!(rows[0][32] < 0.05 * rows[0][31]);
}

#[test]
fn stft_matches_direct_dft() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x: Vec<f32> = (0..4000).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let w = Waveform::mono(x.clone(), 32000).unwrap();
    let cfg = StftConfig {
        center: false,
        ..Default::default()
    };
    let mag = stft_magnitude(&w, &cfg).unwrap();
    let win = hann(1024);
    for frame in [0usize, 3, 5] {
        for bin in [0usize, 1, 100, 257, 512] {
            let (mut re, mut im) = (0.0, 0.0);
            for n in 0..1024 {
                let v = x[frame * 500 + n] as f64 * win[n];
                let ang = -2.0 * PI * (bin * n) as f64 / 1024.0;
                re += v * ang.cos();
                im += v * ang.sin();
            }
            let got = mag[0][frame * 513 + bin];
            assert!(
                (got - re.hypot(im)).abs() < 1e-9 * (1.0 + got),
                "frame {frame} bin {bin}"
            );
        }
    }
}

#[test]
fn silence_gives_zero_magnitude_and_constant_floor() {
    let w = Waveform::mono(vec![0.0; 16000], 32000).unwrap();
    let mag = stft_magnitude(&w, &StftConfig::default()).unwrap();
    assert!(mag[0].iter().all(|&v| v == 0.0));
    let lm = logmel(&w, &StftConfig::default(), &MelConfig::default()).unwrap();
    assert!(lm.data.iter().all(|&v| v == -10.0));
}

#[test]
fn ten_seconds_give_640_by_64() {
    let lm = logmel(
        &tone(440.0, 10.0, 0.3),
        &StftConfig::default(),
        &MelConfig::default(),
    )
    .unwrap();
    assert_eq!((lm.channels, lm.frames, lm.mels), (1, 640, 64));
    assert!(lm.data.iter().all(|v| v.is_finite()));
}

#[test]
fn whole_seconds_give_64_frames_each() {
    let ex = LogMelExtractor::new(StftConfig::default(), MelConfig::default()).unwrap();
    for d in 1..=4 {
        let lm = ex
            .extract(&Waveform::mono(vec![0.1; 32000 * d], 32000).unwrap())
            .unwrap();
        assert_eq!(lm.frames, 64 * d);
    }
}

#[test]
fn short_clip_without_padding_has_no_frames() {
    let cfg = StftConfig {
        center: false,
        ..Default::default()
    };
    let mag = stft_magnitude(&Waveform::mono(vec![0.5; 1000], 32000).unwrap(), &cfg).unwrap();
    assert!(mag[0].is_empty());
}

#[test]
fn wrong_rate_is_rejected() {
    let w = Waveform::mono(vec![0.0; 100], 16000).unwrap();
    assert!(stft_magnitude(&w, &StftConfig::default()).is_err());
}

#[test]
fn scaling_by_ten_adds_two() {
    let ex = LogMelExtractor::new(StftConfig::default(), MelConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x: Vec<f32> = (0..32000).map(|_| rng.gen_range(-0.05..0.05)).collect();
    let a = ex
        .extract(&Waveform::mono(x.clone(), 32000).unwrap())
        .unwrap();
    let b = ex
        .extract(&Waveform::mono(x.iter().map(|v| v * 10.0).collect(), 32000).unwrap())
        .unwrap();
    for (u, v) in a.data.iter().zip(&b.data) {
        if *u > -9.0 {
            assert!((v - u - 2.0).abs() < 1e-4, "{u} → {v}");
        }
    }
}

#[test]
fn twenty_db_quieter_tone_has_one_hundredth_the_power() {
    let ex = LogMelExtractor::new(StftConfig::default(), MelConfig::default()).unwrap();
    let loud: f64 = ex.mel_power(tone(2000.0, 1.0, 1.0).channel(0)).iter().sum();
    let quiet: f64 = ex.mel_power(tone(2000.0, 1.0, 0.1).channel(0)).iter().sum();
    assert!((loud / quiet / 100.0 - 1.0).abs() < 0.01);
}

#[test]
fn filterbank_shape_and_rows() {
    let cfg = MelConfig::default();
    let fb = mel_filterbank(&cfg, 513, 32000).unwrap();
    assert_eq!(fb.len(), 64 * 513);
    let mut sums = Vec::new();
    for row in fb.chunks(513) {
        assert!(row.iter().all(|&w| w >= 0.0));
        // Unimodal: non-decreasing up to the peak, non-increasing after, with a single maximum.
        let peak = argmax(row);
        assert!(row[..=peak].windows(2).all(|p| p[0] <= p[1]));
        assert!(row[peak..].windows(2).all(|p| p[0] >= p[1]));
        assert_eq!(row.iter().filter(|&&w| w == row[peak]).count(), 1);
        let ones: f64 = row.iter().sum();
        assert!(ones.is_finite() && ones > 0.0);
        sums.push(ones);
    }
    assert!(sums.windows(2).any(|p| (p[0] - p[1]).abs() > 1e-6));
    let edges = mel_band_edges(&cfg);
    assert!((edges[0] - 50.0).abs() < 1e-9 && (edges[65] - 14000.0).abs() < 1e-6);
    assert!(edges.windows(2).all(|p| p[0] < p[1]));
}

#[test]
fn tone_at_filter_centre_excites_that_filter_most() {
    let ex = LogMelExtractor::new(StftConfig::default(), MelConfig::default()).unwrap();
    let edges = mel_band_edges(&MelConfig::default());
    let mut misses = Vec::new();
    for m in 0..64 {
        let p = ex.mel_power(tone(edges[m + 1], 0.5, 0.5).channel(0));
        let mean: Vec<f64> = (0..64)
            .map(|k| p.iter().skip(k).step_by(64).sum::<f64>())
            .collect();
        if argmax(&mean) != m {
            misses.push(m);
        }
    }
    assert!(
        misses.is_empty(),
        "filters whose centre tone peaks elsewhere: {misses:?}"
    );
}

#[test]
fn feature_store_roundtrip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let m = LogMel::new(
        2,
        3,
        4,
        (0..24).map(|i| i as f32 * -0.5 + f32::EPSILON).collect(),
    )
    .unwrap();
    let p = dir.path().join("x.lmel");
    write_features(&p, &m).unwrap();
    assert_eq!(read_features(&p).unwrap(), m);

    let mut bytes = encode_features(&m);
    bytes[0] = b'X';
    assert!(matches!(
        decode_features(&bytes),
        Err(Error::MagicMismatch { .. })
    ));
    let bytes = encode_features(&m);
    assert!(matches!(
        decode_features(&bytes[..bytes.len() - 1]),
        Err(Error::Truncated(_))
    ));
    assert!(matches!(
        decode_features(&bytes[..10]),
        Err(Error::Truncated(_))
    ));
}

proptest! {
    #[test]
    fn feature_store_is_bit_exact(bits in prop::collection::vec(any::<u32>(), 0..60), c in 1usize..3) {
        let per = bits.len() / c;
        let data: Vec<f32> = bits[..per * c].iter().map(|&b| f32::from_bits(b)).collect();
        let m = LogMel::new(c, per, 1, data).unwrap();
        let back = decode_features(&encode_features(&m)).unwrap();
        prop_assert_eq!(back.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                        m.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
}
