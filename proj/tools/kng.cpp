#include "kng/cli.hpp"

int main(int argc, char** argv) { return kng::cli_dispatch(argc, argv); }
