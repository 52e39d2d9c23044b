#include "lotlip/cli.hpp"

int main(int argc, char** argv) { return lotlip::cli::dispatch(argc, argv); }
