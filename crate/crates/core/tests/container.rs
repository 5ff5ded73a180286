use jaws_core::container::*;
use jaws_core::field::Field;
use jaws_core::model::{Architecture, HeadKind, ModelParams};
use jaws_core::objective::Method;
use jaws_core::solver::{Dataset, Split, Trajectory};
use jaws_core::JawsError;
use proptest::prelude::*;

fn arch() -> Architecture {
    Architecture {
        grid: 8,
        channels: 2,
        kernel: 3,
        depth: 2,
        head: HeadKind::Spatial {
            channels: 2,
            kernel: 3,
        },
    }
}

fn finite() -> impl Strategy<Value = f64> {
    any::<f64>().prop_filter("finite", |v| v.is_finite())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn checkpoint_round_trip_is_bitwise(values in prop::collection::vec(finite(), 64), s1 in finite(), seed in any::<u64>()) {
        let mut p = ModelParams::init(arch(), seed).unwrap();
        for (i, t) in p.theta.iter_mut().chain(p.phi.iter_mut()).enumerate() {
            *t = values[i % values.len()];
        }
        p.s1 = s1;
        let meta = CheckpointMeta { method: Some(Method::JawsS), seed: Some(seed), dataset_digest: Some("ab".into()) };
        let bytes = encode_checkpoint(&p, &meta).unwrap();
        let (q, m) = decode_checkpoint(&bytes).unwrap();
        prop_assert_eq!(&m, &meta);
        prop_assert!(p.flat().iter().zip(q.flat()).all(|(a, b)| a.to_bits() == b.to_bits()));
        prop_assert_eq!(encode_checkpoint(&q, &m).unwrap(), bytes);
    }

    #[test]
    fn dataset_round_trip_is_bitwise(values in prop::collection::vec(-1e6f64..1e6, 24), nu in 1e-4f64..1.0) {
        let states: Vec<Field> = values.chunks(8).map(|c| Field::new(c.to_vec()).unwrap()).collect();
        let t = Trajectory::new(states, nu, 0.01, 10).unwrap();
        let ds = Dataset::new(vec![t.clone(), t], Split::Test, 9, (nu, nu)).unwrap();
        let bytes = encode_dataset(&ds).unwrap();
        prop_assert_eq!(decode_dataset(&bytes).unwrap(), ds);
    }
}

fn tiny() -> Vec<u8> {
    encode_checkpoint(&ModelParams::init(arch(), 0).unwrap(), &CheckpointMeta::default()).unwrap()
}

#[test]
fn layout_is_magic_length_header_payload() {
    let bytes = tiny();
    assert_eq!(&bytes[..5], MAGIC);
    let len = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let header: serde_json::Value = serde_json::from_slice(&bytes[9..9 + len]).unwrap();
    assert_eq!(header["kind"], "checkpoint");
    let p = ModelParams::init(arch(), 0).unwrap();
    assert_eq!(bytes.len() - 9 - len, 8 * p.flat().len());
}

#[test]
fn corrupted_containers_are_rejected() {
    let mut bad = tiny();
    bad[1] = b'X';
    assert!(matches!(decode(&bad), Err(JawsError::BadMagic)));
    assert!(matches!(decode(b"JAW"), Err(JawsError::BadMagic)));

    let good = tiny();
    assert!(matches!(decode(&good[..good.len() - 3]), Err(JawsError::Format(_))));
    assert!(matches!(decode(&good[..7]), Err(JawsError::Format(_))));
    assert!(matches!(decode_dataset(&good), Err(JawsError::Format(_))));
}

#[test]
fn digest_is_sha256_hex() {
    assert_eq!(
        digest(b"abc"),
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    );
}
