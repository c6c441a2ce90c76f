//! Round-trip and robustness properties of the file formats.

use densify_core::io::{parse_obj, parse_ply, read_manifest, write_manifest, write_ply, Encoding};
use densify_core::io::{Manifest, Record, Split, Status};
use densify_core::PointCloud;
use proptest::prelude::*;

fn cloud_strategy(max: usize) -> impl Strategy<Value = PointCloud> {
    (1..max, any::<bool>(), any::<bool>()).prop_flat_map(|(n, has_colors, has_labels)| {
        (
            prop::collection::vec(prop::array::uniform3(-1.0e4f32..1.0e4), n),
            prop::collection::vec(prop::array::uniform3(any::<u8>()), n),
            prop::collection::vec(0i32..50, n),
        )
            .prop_map(move |(p, c, l)| PointCloud {
                positions: p.into_iter().map(|v| v.map(|x| x as f64)).collect(),
                colors: has_colors.then_some(c),
                labels: has_labels.then_some(l),
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn binary_round_trip_is_exact(cloud in cloud_strategy(400)) {
        let bytes = write_ply(&cloud, Encoding::BinaryLittleEndian);
        let back = parse_ply(&bytes).unwrap();
        prop_assert_eq!(back.positions.iter().flatten().map(|v| v.to_bits()).collect::<Vec<_>>(),
                        cloud.positions.iter().flatten().map(|v| v.to_bits()).collect::<Vec<_>>());
        prop_assert_eq!(back, cloud);
    }

    #[test]
    fn ascii_round_trip_within_six_digits(cloud in cloud_strategy(200)) {
        let back = parse_ply(&write_ply(&cloud, Encoding::Ascii)).unwrap();
        prop_assert_eq!(back.len(), cloud.len());
        for (a, b) in back.positions.iter().zip(&cloud.positions) {
            for k in 0..3 {
                // six significant digits: half a unit in the sixth digit
                prop_assert!((a[k] - b[k]).abs() <= 5e-6 * b[k].abs());
                if b[k].abs() < 1.0 {
                    prop_assert!((a[k] - b[k]).abs() <= 1e-6);
                }
            }
        }
        prop_assert_eq!(back.colors, cloud.colors);
        prop_assert_eq!(back.labels, cloud.labels);
    }

    #[test]
    fn obj_never_yields_out_of_range_indices(
        nv in 0usize..6,
        faces in prop::collection::vec(prop::collection::vec(-8i64..9, 0..6), 0..6),
    ) {
        let mut src = String::new();
        for i in 0..nv {
            src.push_str(&format!("v {i} {} 0\n", i * i));
        }
        for f in &faces {
            src.push('f');
            for i in f {
                src.push_str(&format!(" {i}"));
            }
            src.push('\n');
        }
        if let Ok(parsed) = parse_obj(src.as_bytes()) {
            let n = parsed.mesh.vertices.len() as u32;
            prop_assert!(parsed.mesh.triangles.iter().flatten().all(|&i| i < n));
            prop_assert!(parsed.mesh.validate().is_ok());
        }
    }
}

#[test]
fn forty_thousand_point_binary_round_trip() {
    let positions: Vec<[f64; 3]> = (0..40_000)
        .map(|i| {
            let t = i as f32;
            [(t * 0.37).sin(), (t * 0.11).cos() * 3.0, t * 1e-3].map(|v| v as f64)
        })
        .collect();
    let cloud = PointCloud::from_positions(positions)
        .with_colors((0..40_000).map(|i| [(i % 256) as u8, 7, 200]).collect())
        .with_labels((0..40_000).map(|i| i % 4).collect());
    let bytes = write_ply(&cloud, Encoding::BinaryLittleEndian);
    assert_eq!(parse_ply(&bytes).unwrap(), cloud);
}

#[test]
fn manifest_round_trip_of_generated_records() {
    let mut m = Manifest::default();
    for i in 0..100 {
        let mut r = Record::new(
            format!("obj_{i:03}"),
            ["chair", "lamp", "mug"][i % 3],
            format!("meshes/{i}.obj"),
            format!("sparse/{i}.ply"),
            format!("dense/{i}.ply"),
            if i % 5 == 0 {
                Split::Test
            } else {
                Split::Train
            },
        );
        if i % 2 == 0 {
            r.status = Status::Labeled;
            r.labels = Some(vec![0, 1, (i % 7) as i32 + 2]);
            r.knn = Some(densify_core::io::manifest::KnnEntry {
                k: 3,
                weighting: "uniform".into(),
                accuracy: 0.1 * (i % 10) as f64 + 1.0 / 3.0,
                accuracies: vec![0.5; 18],
            });
        }
        m.records.push(r);
    }
    let bytes = write_manifest(&m);
    let back = read_manifest(&bytes).unwrap();
    assert_eq!(back, m);
    assert_eq!(write_manifest(&back), bytes);
}
