fn main() {
    std::process::exit(relex::cli::main_exit_code());
}
