use std::env;
use std::path::PathBuf;

fn main() {
    let crate_dir = PathBuf::from(env::var("CARGO_MANIFEST_DIR").unwrap());
    let header = crate_dir.join("include").join("qpnn.h");
    std::fs::create_dir_all(header.parent().unwrap()).expect("create include dir");
    let config = cbindgen::Config {
        language: cbindgen::Language::C,
        include_guard: Some("QPNN_H".into()),
        cpp_compat: true,
        documentation: true,
        ..Default::default()
    };
    cbindgen::Builder::new()
        .with_crate(&crate_dir)
        .with_config(config)
        .generate()
        .expect("generate C bindings")
        .write_to_file(header);
    println!("cargo:rerun-if-changed=src/lib.rs");
}
