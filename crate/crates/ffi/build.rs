use std::env;
use std::path::PathBuf;

fn main() {
    let crate_dir = PathBuf::from(env::var("CARGO_MANIFEST_DIR").unwrap());
    let config = cbindgen::Config::from_file(crate_dir.join("cbindgen.toml")).unwrap_or_default();
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
    match cbindgen::Builder::new().with_config(config).with_crate(&crate_dir).generate() {
        Ok(b) => {
            b.write_to_file(crate_dir.join("include/banditlab.h"));
        }
        Err(e) => println!("cargo:warning=header generation skipped: {e}"),
    }
}
