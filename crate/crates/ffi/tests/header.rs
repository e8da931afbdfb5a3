use std::path::Path;
use std::process::Command;

fn header() -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/grpcoll.h");
    std::fs::read_to_string(path).expect("header is generated by the build script")
}

#[test]
fn header_declares_every_export() {
    let h = header();
    let src = include_str!("../src/lib.rs");
    let exports: Vec<&str> = src
        .split("extern \"C\" fn ")
        .skip(1)
        .map(|rest| &rest[..rest.find('(').unwrap()])
        .collect();
    assert!(exports.len() >= 15, "{exports:?}");
    for name in exports {
        assert!(
            h.contains(&format!("{name}(")),
            "{name} missing from header"
        );
    }
    assert!(h.contains("typedef struct GrpKey GrpKey;"));
    assert!(h.contains("GRP_STATUS_OK = 0"));
}

#[test]
fn header_compiles_as_c() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let probe = std::env::temp_dir().join(format!("grpcoll_header_{}.c", std::process::id()));
    std::fs::write(
        &probe,
        "#include \"grpcoll.h\"\nint main(void) { GrpKey *k = 0; return grp_key_generate(2, 4, 1, &k) == GRP_STATUS_OK; }\n",
    )
    .unwrap();
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&dir)
        .arg(&probe)
        .status();
    let _ = std::fs::remove_file(&probe);
    match status {
        Ok(s) => assert!(s.success(), "header does not compile"),
        Err(e) => eprintln!("skipping: no C compiler ({e})"),
    }
}
