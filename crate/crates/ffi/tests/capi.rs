use std::ffi::{CStr, CString};
use std::ptr;

use nelson_ibc_ffi::*;

const THREE_NODES: &str = "[grid]\nn_radial = 1\nn_angular = 3\n";

fn model(config: &str) -> *mut NibModel {
    let text = CString::new(config).unwrap();
    let mut m = ptr::null_mut();
    let status = unsafe { nib_model_new(text.as_ptr(), &mut m) };
    assert_eq!(status, NibStatus::Ok, "{}", last_error());
    assert!(!m.is_null());
    m
}

fn last_error() -> String {
    let p = nib_last_error_message();
    if p.is_null() {
        String::new()
    } else {
        unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
    }
}

fn dimension(m: *const NibModel) -> usize {
    let mut n = 0;
    assert_eq!(unsafe { nib_model_dimension(m, &mut n) }, NibStatus::Ok);
    n
}

#[test]
fn reference_dimension_and_ground_state() {
    let m = model("");
    let n = dimension(m);
    assert_eq!(n, 190);
    let mut e0 = 0.0;
    let mut v = vec![0.0; n];
    assert_eq!(unsafe { nib_model_ground_state(m, &mut e0, v.as_mut_ptr(), n) }, NibStatus::Ok);
    assert!((e0 - 5.3316).abs() < 1e-3, "{e0}");
    // attractive coupling: strictly positive ground state
    assert!(v.iter().all(|&x| x > 0.0));
    unsafe { nib_model_free(m) };
}

#[test]
fn hamiltonian_is_measure_symmetric_and_ground_state_is_eigenvector() {
    let m = model(THREE_NODES);
    let n = dimension(m);
    assert_eq!(n, 10);
    let mut h = vec![0.0; n * n];
    let mut w = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut e0 = 0.0;
    unsafe {
        assert_eq!(nib_model_hamiltonian(m, h.as_mut_ptr(), h.len()), NibStatus::Ok);
        assert_eq!(nib_model_measure(m, w.as_mut_ptr(), n), NibStatus::Ok);
        assert_eq!(nib_model_ground_state(m, &mut e0, v.as_mut_ptr(), n), NibStatus::Ok);
    }
    let scale = h.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    for i in 0..n {
        for j in 0..n {
            assert!((w[i] * h[i * n + j] - w[j] * h[j * n + i]).abs() <= 1e-12 * scale * w[i].max(w[j]));
        }
        let hv: f64 = (0..n).map(|j| h[i * n + j] * v[j]).sum();
        assert!((hv - e0 * v[i]).abs() <= 1e-10 * scale);
    }
    let norm: f64 = v.iter().zip(&w).map(|(x, w)| w * x * x).sum();
    assert!((norm - 1.0).abs() < 1e-12);
    unsafe { nib_model_free(m) };
}

#[test]
fn resolvent_inverts_shifted_hamiltonian() {
    let m = model(THREE_NODES);
    let n = dimension(m);
    let (mut h, mut r) = (vec![0.0; n * n], vec![0.0; n * n]);
    unsafe {
        assert_eq!(nib_model_hamiltonian(m, h.as_mut_ptr(), n * n), NibStatus::Ok);
        assert_eq!(nib_model_resolvent(m, 3.0, r.as_mut_ptr(), n * n), NibStatus::Ok);
    }
    for i in 0..n {
        for j in 0..n {
            let p: f64 = (0..n).map(|k| (h[i * n + k] + if i == k { 3.0 } else { 0.0 }) * r[k * n + j]).sum();
            assert!((p - if i == j { 1.0 } else { 0.0 }).abs() < 1e-10);
        }
    }
    unsafe { nib_model_free(m) };
}

#[test]
fn errors_are_reported() {
    let bad = CString::new("[grid]\nradius = 2\n").unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { nib_model_new(bad.as_ptr(), &mut m) }, NibStatus::InvalidConfig);
    assert!(m.is_null());
    assert!(last_error().contains("radius"));

    let big = CString::new("[fock]\nmax_dim = 100\n").unwrap();
    assert_eq!(unsafe { nib_model_new(big.as_ptr(), &mut m) }, NibStatus::ResourceLimit);
    assert!(last_error().contains("190"));

    assert_eq!(unsafe { nib_model_new(ptr::null(), &mut m) }, NibStatus::NullPointer);
    let mut n = 0;
    assert_eq!(unsafe { nib_model_dimension(ptr::null(), &mut n) }, NibStatus::NullPointer);

    let m = model(THREE_NODES);
    let mut small = vec![0.0; 5];
    assert_eq!(unsafe { nib_model_hamiltonian(m, small.as_mut_ptr(), 5) }, NibStatus::BufferTooSmall);
    assert_eq!(unsafe { nib_model_resolvent(m, f64::NAN, small.as_mut_ptr(), 5) }, NibStatus::InvalidConfig);
    unsafe {
        nib_model_free(m);
        nib_model_free(ptr::null_mut());
    }
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(nib_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/nelson_ibc.h")).unwrap();
    for name in [
        "typedef struct NibModel NibModel",
        "NIB_STATUS_OK = 0",
        "NIB_STATUS_RESOURCE_LIMIT",
        "nib_model_new",
        "nib_model_free",
        "nib_model_dimension",
        "nib_model_measure",
        "nib_model_hamiltonian",
        "nib_model_resolvent",
        "nib_model_ground_state",
        "nib_last_error_message",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

#[test]
fn c_example_links_against_static_library() {
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|d| d.parent()).unwrap();
    let lib = profile_dir.join("libnelson_ibc_ffi.a");
    let manifest = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    if !lib.exists() || std::process::Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipped: no C compiler or static library");
        return;
    }
    let out = tempfile_path("ground_state");
    let status = std::process::Command::new("cc")
        .arg(format!("-I{}", manifest.join("include").display()))
        .arg(manifest.join("examples/ground_state.c"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let run = std::process::Command::new(&out).output().unwrap();
    assert!(run.status.success());
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("dimension 10, E0 = 3.00"));
    let _ = std::fs::remove_file(out);
}

fn tempfile_path(stem: &str) -> std::path::PathBuf {
    std::env::temp_dir().join(format!("{stem}-{}", std::process::id()))
}
