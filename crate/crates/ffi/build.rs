use std::path::PathBuf;

fn main() {
    let crate_dir = PathBuf::from(std::env::var("CARGO_MANIFEST_DIR").unwrap());
    let header = crate_dir.join("include").join("refsim.h");
    std::fs::create_dir_all(header.parent().unwrap()).expect("create include dir");
    cbindgen::Builder::new()
        .with_crate(&crate_dir)
        .with_language(cbindgen::Language::C)
        .with_include_guard("REFSIM_H")
        .with_cpp_compat(true)
        .with_documentation(true)
        .generate()
        .expect("cbindgen generates the C header")
        .write_to_file(&header);
    println!("cargo:rerun-if-changed=src/lib.rs");
}
