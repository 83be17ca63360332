from mixgrad.cli.main import main

main()
