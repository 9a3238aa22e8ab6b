#include "cli.hpp"

int main(int argc, char** argv) { return silnet::run_cli({argv + 1, argv + argc}); }
