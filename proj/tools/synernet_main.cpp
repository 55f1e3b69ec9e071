#include "synernet/cli.hpp"

int main(int argc, char** argv) { return synernet::dispatch(argc, argv); }
