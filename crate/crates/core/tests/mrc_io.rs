mod common;

use common::encode_big_endian;
use gridscreen::mrc::{read_mrc, write_mrc, Mode, MrcError, MrcVolume, HEADER_LEN};
use ndarray::Array3;
use proptest::prelude::*;

fn mode_strategy() -> impl Strategy<Value = Mode> {
    prop_oneof![Just(Mode::Int8), Just(Mode::Int16), Just(Mode::Float32), Just(Mode::Uint16)]
}

fn volume_strategy() -> impl Strategy<Value = (Mode, Array3<f32>)> {
    (mode_strategy(), 1usize..5, 1usize..7, 1usize..7).prop_flat_map(|(mode, nz, ny, nx)| {
        let (lo, hi) = mode.int_range().unwrap_or((-1e6, 1e6));
        // Stay half a step inside the range so rounding cannot overflow.
        prop::collection::vec(lo + 0.5..hi - 0.5, nz * ny * nx)
            .prop_map(move |v| (mode, Array3::from_shape_vec((nz, ny, nx), v).unwrap()))
    })
}

#[test]
fn generated_file_round_trips_byte_identical() {
    let data = Array3::from_shape_fn((1, 4, 4), |(_, r, c)| (r * 4 + c) as f32 * 0.25 - 1.0);
    let bytes = MrcVolume::new(data, Mode::Float32).to_bytes(Mode::Float32).unwrap();
    let back = MrcVolume::from_bytes(&bytes).unwrap();
    assert_eq!(back.to_bytes(Mode::Float32).unwrap(), bytes);
}

#[test]
fn file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.mrc");
    let data = Array3::from_shape_fn((2, 8, 8), |(z, r, c)| ((z * 64 + r * 8 + c) as f32).sin());
    let vol = MrcVolume::new(data.clone(), Mode::Float32);
    write_mrc(&vol, &path, Mode::Float32).unwrap();
    assert_eq!(read_mrc(&path).unwrap().data, data);
    assert!(matches!(read_mrc(dir.path().join("missing.mrc")), Err(MrcError::IoFailure(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn round_trip_within_quantization((mode, data) in volume_strategy()) {
        let bytes = MrcVolume::new(data.clone(), mode).to_bytes(mode).unwrap();
        let back = MrcVolume::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.header.mode, mode);
        prop_assert_eq!(back.data.dim(), data.dim());
        for (&a, &b) in data.iter().zip(back.data.iter()) {
            match mode {
                Mode::Float32 => prop_assert_eq!(a.to_bits(), b.to_bits()),
                _ => prop_assert!((a - b).abs() <= 0.5 && b == b.round()),
            }
        }
        let (lo, hi) = back.data.iter().fold((f32::MAX, f32::MIN), |(l, h), &v| (l.min(v), h.max(v)));
        prop_assert_eq!((back.header.dmin, back.header.dmax), (lo, hi));
    }

    #[test]
    fn big_endian_matches_little_endian((mode, data) in volume_strategy()) {
        let data = data.mapv(f32::round);
        let code = mode.code();
        let big = MrcVolume::from_bytes(&encode_big_endian(&data, code)).unwrap();
        prop_assert_eq!(&big.data, &data);
        let little = MrcVolume::from_bytes(&big.to_bytes(mode).unwrap()).unwrap();
        prop_assert_eq!(&little.data, &big.data);
    }

    #[test]
    fn length_mismatch_rejected((mode, data) in volume_strategy(), cut in 1usize..64, extra in 1usize..8) {
        let bytes = MrcVolume::new(data, mode).to_bytes(mode).unwrap();
        let short = bytes.len().saturating_sub(cut).max(HEADER_LEN - 1);
        let is_truncated = matches!(MrcVolume::from_bytes(&bytes[..short]), Err(MrcError::TruncatedFile { .. }));
        prop_assert!(is_truncated);
        let mut long = bytes.clone();
        long.extend(std::iter::repeat_n(0u8, extra));
        let is_trailing = matches!(MrcVolume::from_bytes(&long), Err(MrcError::TrailingBytes { extra: e }) if e == extra);
        prop_assert!(is_trailing);
    }

    #[test]
    fn int_overflow_rejected(mode in prop_oneof![Just(Mode::Int8), Just(Mode::Int16), Just(Mode::Uint16)], over in 1.0f32..100.0) {
        let (_, hi) = mode.int_range().unwrap();
        let data = Array3::from_elem((1, 1, 2), hi + over);
        let is_out_of_range = matches!(MrcVolume::new(data, mode).to_bytes(mode), Err(MrcError::ValueOutOfRange { index: 0, .. }));
        prop_assert!(is_out_of_range);
    }
}
