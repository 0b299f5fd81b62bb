from vla_world_lab.main import main

if __name__ == "__main__":
    raise SystemExit(main())
