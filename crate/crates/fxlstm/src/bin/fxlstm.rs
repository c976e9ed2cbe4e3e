fn main() {
    std::process::exit(fxlstm::cli::main());
}
