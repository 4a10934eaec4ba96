#include "ctformer/app/commands.h"

int main(int argc, char** argv) { return ctformer::app::run_cli(argc, argv); }
