use neck_core::io::{
    load_checkpoint, load_image_pnm, read_checkpoint, read_tensor_file, save_checkpoint, write_checkpoint,
    write_tensor_file, AnyTensor,
};
use neck_core::pyramid::NeckModel;
use neck_core::{NeckConfig, NeckGraph, Parameters, ScalarKind, SeedStream, Tensor};

#[test]
fn tensor_files_round_trip_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let rng = SeedStream::new(1);
    let a32: Tensor<f32> = rng.uniform("a", [2, 3, 4, 5], -1.0, 1.0);
    let a64: Tensor<f64> = rng.uniform("b", [1, 1, 7, 1], -1e6, 1e6);
    let p1 = dir.path().join("a.aft");
    let p2 = dir.path().join("b.aft");

    write_tensor_file(&p1, &a32).unwrap();
    let AnyTensor::F32(back) = read_tensor_file(&p1).unwrap() else {
        panic!("kind changed")
    };
    assert!(back.bitwise_eq(&a32));
    write_tensor_file(&p2, &back).unwrap();
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());

    write_tensor_file(&p1, &a64).unwrap();
    let t = read_tensor_file(&p1).unwrap();
    assert_eq!(t.kind(), ScalarKind::F64);
    write_tensor_file(&p2, &t.cast::<f64>()).unwrap();
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
}

#[test]
fn checkpoint_save_load_save_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = NeckConfig::tiny();
    let model = NeckModel::<f32>::build(&cfg).unwrap();
    let p1 = dir.path().join("a.ck");
    let p2 = dir.path().join("b.ck");
    save_checkpoint(&p1, &model).unwrap();
    let mut other = NeckModel::<f32>::build(&NeckConfig { seed: 77, ..cfg }).unwrap();
    assert_ne!(write_checkpoint(&other).unwrap(), std::fs::read(&p1).unwrap());
    load_checkpoint(&p1, &mut other).unwrap();
    save_checkpoint(&p2, &other).unwrap();
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());

    let img: Tensor<f32> = SeedStream::new(2).uniform("img", [1, 3, 64, 64], 0.0, 1.0);
    let a = model.forward_image(&img).unwrap();
    let b = other.forward_image(&img).unwrap();
    assert!((0..3).all(|i| a[i].bitwise_eq(&b[i])));
}

#[test]
fn param_count_equals_checkpoint_scalars() {
    for cfg in [NeckConfig::tiny(), NeckConfig::tiny().baseline(), NeckConfig::default()] {
        let neck = NeckGraph::<f32>::build(&cfg).unwrap();
        let entries = read_checkpoint(&write_checkpoint(&neck).unwrap()).unwrap();
        let scalars: usize = entries.iter().map(|e| e.tensor.dims().numel()).sum();
        assert_eq!(scalars as u64, neck.param_count());
        let mut names: Vec<&str> = entries.iter().map(|e| e.name.as_str()).collect();
        let n = names.len();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), n, "duplicate parameter names");
    }
}

#[test]
fn checkpoint_precision_is_converted_and_mismatches_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ck");
    let cfg = NeckConfig::tiny();
    let m64 = NeckModel::<f64>::build(&cfg).unwrap();
    save_checkpoint(&path, &m64).unwrap();
    let mut m32 = NeckModel::<f32>::build(&NeckConfig { seed: 5, ..cfg.clone() }).unwrap();
    load_checkpoint(&path, &mut m32).unwrap();
    assert_eq!(m32.named_params()[0].1, m64.named_params()[0].1.cast::<f32>());

    let mut wider = NeckModel::<f32>::build(&NeckConfig {
        hidden_dim: 16,
        ..cfg.clone()
    })
    .unwrap();
    let msg = load_checkpoint(&path, &mut wider).unwrap_err().to_string();
    assert!(msg.contains("neck.proj3.weight") && msg.contains("dims"), "{msg}");

    let mut baseline = NeckModel::<f32>::build(&cfg.baseline()).unwrap();
    let msg = load_checkpoint(&path, &mut baseline).unwrap_err().to_string();
    assert!(msg.contains("missing") && msg.contains("unexpected"), "{msg}");
}

#[test]
fn pnm_files_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let ppm = dir.path().join("a.ppm");
    let mut bytes = b"P6\n2 2\n255\n".to_vec();
    bytes.extend_from_slice(&[255, 0, 0, 0, 255, 0, 0, 0, 255, 255, 255, 255]);
    std::fs::write(&ppm, &bytes).unwrap();
    let t: Tensor<f32> = load_image_pnm(&ppm).unwrap();
    // channel planes: R = [1,0,0,1], G = [0,1,0,1], B = [0,0,1,1]
    assert_eq!(t.data(), &[1., 0., 0., 1., 0., 1., 0., 1., 0., 0., 1., 1.]);

    let pgm = dir.path().join("z.pgm");
    let mut bytes = b"P5\n4 3\n255\n".to_vec();
    bytes.extend_from_slice(&[0; 12]);
    std::fs::write(&pgm, &bytes).unwrap();
    let z: Tensor<f64> = load_image_pnm(&pgm).unwrap();
    assert_eq!(z, Tensor::zeros([1, 3, 3, 4]));

    let ascii = dir.path().join("x.ppm");
    std::fs::write(&ascii, b"P3\n1 1\n255\n0 0 0\n").unwrap();
    let msg = load_image_pnm::<f32>(&ascii).unwrap_err().to_string();
    assert!(msg.contains("unsupported") && msg.contains("x.ppm"), "{msg}");
    assert!(load_image_pnm::<f32>(dir.path().join("missing.ppm")).is_err());
}
