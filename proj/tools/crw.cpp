#include "crw/cli.hpp"

int main(int argc, char** argv) { return crw::run_command(argc, argv); }
