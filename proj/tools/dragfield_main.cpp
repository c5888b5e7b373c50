#include "dragfield/cli.hpp"

int main(int argc, char** argv) { return dragfield::run_cli(argc, argv); }
