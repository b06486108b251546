fn main() {
    // system OpenBLAS provides BLAS, CBLAS, and LAPACK symbols
    println!("cargo:rustc-link-lib=openblas");
}
