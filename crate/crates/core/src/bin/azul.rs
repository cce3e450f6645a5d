fn main() {
    std::process::exit(azul_sim::cli::main());
}
