//! Finite-difference check of the decoder and of the encoder through a
//! two-step inner loop, on a small model.
//!
//! `cargo run --release --example grad_check`

fn main() {
    let code = enfield::cli::run(["enfield", "check-grad", "--tiny"]);
    std::process::exit(code);
}
