// The fixture was produced by a separate struct.pack-based encoder, so these
// tests pin the on-disk layout independently of our own writer.

use feds_core::store::{FedsFile, SampleStore, SECTION_CENTROIDS, SECTION_SAMPLES};
use feds_core::{Error, EmbeddingVector};

const FIXTURE: &[u8] = include_bytes!("fixtures/two_class.feds");

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn u64_at(b: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

#[test]
fn fixture_header_decodes_by_hand() {
    let b = FIXTURE;
    assert_eq!(b.len(), 121);
    assert_eq!(&b[..4], b"FED1");
    assert_eq!(u32_at(b, 4), 2); // dim
    assert_eq!(u32_at(b, 8), 2); // label count
    assert_eq!(u32_at(b, 12), 1);
    assert_eq!(&b[16..17], b"a");
    assert_eq!(u32_at(b, 17), 2);
    assert_eq!(&b[21..23], b"bc");
    assert_eq!(u32_at(b, 23), 2); // sections
    assert_eq!(b[27], SECTION_SAMPLES);
    assert_eq!(u64_at(b, 28), 2);
    assert_eq!(u64_at(b, 36), 3); // first sample id
    assert_eq!(b[76], SECTION_CENTROIDS);
    assert_eq!(u32_at(b, 117), crc32fast::hash(&b[..117]));
}

#[test]
fn fixture_round_trips_through_store() {
    let store = SampleStore::from_bytes(FIXTURE).unwrap();
    assert_eq!(store.dim(), 2);
    assert_eq!(store.labels(), ["a", "bc"]);
    let samples: Vec<(u64, &str, &[f32])> =
        store.samples().iter().map(|s| (s.id, s.label.as_str(), s.vector.values())).collect();
    assert_eq!(samples, [(3, "a", &[0.5f32, 0.25][..]), (7, "bc", &[1.0, -2.0][..])]);
    assert_eq!(store.centroids()[1].label, "bc");
    assert_eq!(store.centroids()[1].member_count, 1);
    assert_eq!(store.to_bytes(), FIXTURE);

    let raw = FedsFile::decode(FIXTURE).unwrap();
    assert_eq!(raw.samples[1].vector, EmbeddingVector::new(vec![1.0, -2.0]).unwrap());
    assert!(raw.assignments.is_empty());
}

#[test]
fn fixture_corruption_is_classified() {
    let mut flipped = FIXTURE.to_vec();
    flipped[50] ^= 0x01;
    assert!(matches!(FedsFile::decode(&flipped), Err(Error::CrcMismatch { .. })));

    assert!(matches!(FedsFile::decode(&FIXTURE[..90]), Err(Error::TruncatedFile { .. })));

    let mut version = FIXTURE.to_vec();
    version[3] = b'2';
    let crc = crc32fast::hash(&version[..117]);
    version[117..].copy_from_slice(&crc.to_le_bytes());
    assert!(matches!(FedsFile::decode(&version), Err(Error::UnsupportedVersion(b'2'))));

    let mut bad_ref = FIXTURE.to_vec();
    bad_ref[44] = 9; // label_id of the first sample
    let crc = crc32fast::hash(&bad_ref[..117]);
    bad_ref[117..].copy_from_slice(&crc.to_le_bytes());
    assert!(matches!(FedsFile::decode(&bad_ref), Err(Error::BadLabelRef { label_id: 9, .. })));
}
