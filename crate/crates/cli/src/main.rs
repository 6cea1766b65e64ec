fn main() {
    std::process::exit(ppgbench_cli::run(std::env::args_os()));
}
